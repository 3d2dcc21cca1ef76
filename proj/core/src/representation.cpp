#include "repdiff/representation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "repdiff/rng.hpp"

namespace repdiff {

namespace {

std::vector<double> normalized(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double n = std::sqrt(s);
  if (n == 0.0) throw std::domain_error("encode: zero-norm input before normalization");
  for (double& x : v) x /= n;
  return v;
}

Tensor random_matrix(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
  Tensor m = Tensor::zeros(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) m[i] = scale * rng.normal();
  return m;
}

}  // namespace

Encoder Encoder::class_prototype(const Tensor& prototypes, int out_dim, std::uint64_t seed) {
  if (prototypes.rank() != 2 || prototypes.rows() == 0)
    throw std::invalid_argument("class_prototype: prototypes must be a nonempty matrix");
  Encoder e;
  e.kind_ = EncoderKind::class_prototype;
  e.in_dim_ = static_cast<int>(prototypes.cols());
  e.out_dim_ = out_dim;
  e.prototypes_ = prototypes;
  Rng rng(derive_seed(seed, 0xe2c1));
  e.embeddings_ = Tensor::zeros(prototypes.rows(), out_dim);
  for (std::size_t k = 0; k < prototypes.rows(); ++k) {
    std::vector<double> row(out_dim);
    for (int j = 0; j < out_dim; ++j) row[j] = rng.normal();
    row = normalized(std::move(row));
    for (int j = 0; j < out_dim; ++j) e.embeddings_.at(k, j) = row[j];
  }
  return e;
}

Encoder Encoder::random_feature(int in_dim, int hidden, int out_dim, std::uint64_t seed) {
  if (in_dim < 1 || hidden < 1 || out_dim < 1)
    throw std::invalid_argument("random_feature: dimensions must be positive");
  Encoder e;
  e.kind_ = EncoderKind::random_feature;
  e.in_dim_ = in_dim;
  e.out_dim_ = out_dim;
  Rng rng(derive_seed(seed, 0xe2c2));
  e.V_ = random_matrix(hidden, in_dim, 1.0 / std::sqrt(in_dim), rng);
  e.W_ = random_matrix(out_dim, hidden, 1.0 / std::sqrt(hidden), rng);
  return e;
}

std::vector<double> Encoder::encode(const std::vector<double>& x0) const {
  if (static_cast<int>(x0.size()) != in_dim_)
    throw std::invalid_argument("encode: input dimension mismatch");
  for (double v : x0)
    if (!std::isfinite(v)) throw std::invalid_argument("encode: non-finite input");

  if (kind_ == EncoderKind::class_prototype) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < prototypes_.rows(); ++k) {
      double d = 0.0;
      for (int j = 0; j < in_dim_; ++j) {
        const double diff = x0[j] - prototypes_.at(k, j);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    std::vector<double> out(out_dim_);
    for (int j = 0; j < out_dim_; ++j) out[j] = embeddings_.at(best, j);
    return out;
  }

  const std::size_t hidden = V_.rows();
  std::vector<double> h(hidden, 0.0);
  for (std::size_t i = 0; i < hidden; ++i) {
    double s = 0.0;
    for (int j = 0; j < in_dim_; ++j) s += V_.at(i, j) * x0[j];
    h[i] = std::tanh(s);
  }
  std::vector<double> out(out_dim_, 0.0);
  for (int i = 0; i < out_dim_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < hidden; ++j) s += W_.at(i, j) * h[j];
    out[i] = s;
  }
  return normalized(std::move(out));
}

SyntheticModality SyntheticModality::make(int in_dim, int y_dim, double noise_std,
                                          std::uint64_t seed, int enc_hidden, int enc_out_dim) {
  if (noise_std < 0.0) throw std::invalid_argument("modality: noise_std must be >= 0");
  SyntheticModality s;
  s.in_dim_ = in_dim;
  s.y_dim_ = y_dim;
  s.noise_std_ = noise_std;
  s.nonlinear_ = true;
  Rng rng(derive_seed(seed, 0x90da));
  s.M_ = random_matrix(y_dim, in_dim, 1.0 / std::sqrt(in_dim), rng);
  s.b_ = Tensor::zeros(y_dim);
  for (int i = 0; i < y_dim; ++i) s.b_[i] = 0.3 * rng.normal();
  s.encoder_ = Encoder::random_feature(y_dim, enc_hidden, enc_out_dim, derive_seed(seed, 0x90db));
  return s;
}

SyntheticModality SyntheticModality::identity(int dim, double noise_std, std::uint64_t seed,
                                              int enc_hidden, int enc_out_dim) {
  SyntheticModality s;
  s.in_dim_ = dim;
  s.y_dim_ = dim;
  s.noise_std_ = noise_std;
  s.nonlinear_ = false;
  s.M_ = Tensor::zeros(dim, dim);
  for (int i = 0; i < dim; ++i) s.M_.at(i, i) = 1.0;
  s.b_ = Tensor::zeros(dim);
  s.encoder_ = Encoder::random_feature(dim, enc_hidden, enc_out_dim, derive_seed(seed, 0x90db));
  return s;
}

SyntheticModality::Sample SyntheticModality::sample(const std::vector<double>& x0,
                                                    std::uint64_t rng_seed) const {
  if (static_cast<int>(x0.size()) != in_dim_)
    throw std::invalid_argument("modality: input dimension mismatch");
  Rng rng(derive_seed(rng_seed, 0x5a31));
  Sample out;
  out.y.resize(y_dim_);
  for (int i = 0; i < y_dim_; ++i) {
    double s = b_[i];
    for (int j = 0; j < in_dim_; ++j) s += M_.at(i, j) * x0[j];
    if (nonlinear_) s = std::tanh(s);
    out.y[i] = s;
  }
  if (noise_std_ > 0.0)
    for (int i = 0; i < y_dim_; ++i) out.y[i] += noise_std_ * rng.normal();
  out.zy = encoder_.encode(out.y);
  return out;
}

LatentBundle make_bundle(const std::vector<double>& x0, const Encoder& enc_x,
                         const SyntheticModality* modality, const BundleConfig& cfg,
                         std::uint64_t sample_seed) {
  if (cfg.layer_x < 1 || cfg.layer_x > cfg.denoiser_depth)
    throw std::invalid_argument("make_bundle: layer_x outside [1, depth]");
  LatentBundle b;
  b.levels.push_back({"x", enc_x.encode(x0), cfg.layer_x});
  if (modality != nullptr) {
    if (cfg.layer_y < 1 || cfg.layer_y > cfg.denoiser_depth)
      throw std::invalid_argument("make_bundle: layer_y outside [1, depth]");
    if (cfg.layer_y == cfg.layer_x)
      throw std::invalid_argument("make_bundle: duplicate layer assignment");
    b.levels.push_back({"y", modality->sample(x0, sample_seed).zy, cfg.layer_y});
  }
  return b;
}

}  // namespace repdiff
