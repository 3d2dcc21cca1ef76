#include "repdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "repdiff/rng.hpp"

namespace repdiff {

namespace {

// empirical quantile via linear interpolation between order statistics at
// positions (i + 0.5) / n
double quantile(const std::vector<double>& sorted, double u) {
  const std::size_t n = sorted.size();
  const double pos = u * n - 0.5;
  if (pos <= 0.0) return sorted.front();
  if (pos >= static_cast<double>(n - 1)) return sorted.back();
  const std::size_t i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

double w2_1d(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t m = std::max(a.size(), b.size());
  double acc = 0.0;
  if (a.size() == b.size()) {
    for (std::size_t i = 0; i < m; ++i) {
      const double d = a[i] - b[i];
      acc += d * d;
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
      const double d = quantile(a, u) - quantile(b, u);
      acc += d * d;
    }
  }
  return std::sqrt(acc / static_cast<double>(m));
}

}  // namespace

double sliced_wasserstein(const Tensor& a, const Tensor& b, int projections,
                          std::uint64_t seed) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
    throw std::invalid_argument("sliced_wasserstein: dimension mismatch");
  if (a.rows() == 0 || b.rows() == 0)
    throw std::invalid_argument("sliced_wasserstein: empty sample set");
  if (projections < 1) throw std::invalid_argument("sliced_wasserstein: need projections >= 1");

  const std::size_t dim = a.cols();
  Rng rng(derive_seed(seed, 0x51ce));
  double acc = 0.0;
  std::vector<double> pa(a.rows()), pb(b.rows()), dir(dim);
  for (int p = 0; p < projections; ++p) {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      dir[j] = rng.normal();
      norm2 += dir[j] * dir[j];
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t j = 0; j < dim; ++j) dir[j] *= inv;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) s += a.at(i, j) * dir[j];
      pa[i] = s;
    }
    for (std::size_t i = 0; i < b.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) s += b.at(i, j) * dir[j];
      pb[i] = s;
    }
    acc += w2_1d(pa, pb);
  }
  return acc / projections;
}

TvEstimate tv_histogram(const std::vector<double>& samples,
                        const std::function<double(double)>& ref_cdf, int bins, double lo,
                        double hi) {
  if (bins < 1 || !(lo < hi)) throw std::invalid_argument("tv_histogram: bad binning");
  if (samples.empty()) throw std::invalid_argument("tv_histogram: empty sample set");
  const double n = static_cast<double>(samples.size());
  const double w = (hi - lo) / bins;
  std::vector<double> counts(bins + 2, 0.0);  // [below, bins..., above]
  for (double s : samples) {
    if (s < lo)
      counts[0] += 1.0;
    else if (s >= hi)
      counts[bins + 1] += 1.0;
    else
      counts[1 + static_cast<int>((s - lo) / w)] += 1.0;
  }
  double tv = std::abs(counts[0] / n - ref_cdf(lo));
  for (int b = 0; b < bins; ++b) {
    const double ref = ref_cdf(lo + (b + 1) * w) - ref_cdf(lo + b * w);
    tv += std::abs(counts[b + 1] / n - ref);
  }
  tv += std::abs(counts[bins + 1] / n - (1.0 - ref_cdf(hi)));
  TvEstimate out;
  out.tv = 0.5 * tv;
  out.noise_bound = std::sqrt(static_cast<double>(bins) / n);
  return out;
}

double alignment_cosine(const DiffusionModel& model, const NoiseSchedule& ns, const Tensor& x0s,
                        const Tensor& zx, int t, std::uint64_t seed) {
  if (model.cfg.loss.lambda_x <= 0.0)
    throw std::invalid_argument("alignment_cosine: model has no x alignment head");
  if (t < 1 || t > ns.T) throw std::invalid_argument("alignment_cosine: t outside [1, T]");
  const std::size_t B = x0s.rows();
  Rng rng(derive_seed(seed, 0xa119));
  Tensor noise = Tensor::zeros(B, x0s.cols());
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = rng.normal();
  const std::vector<int> ts(B, t);

  Graph g;
  ParamVars pv = param_leaves(g, model.params);
  Var xt = g.leaf(forward_sample_batch(ns, x0s, ts, noise));
  const bool dummy = model.cfg.den.latent_dim > 0;  // never peek at the true z here
  const auto tr = model.forward(g, pv, xt, ts, nullptr, nullptr, dummy);

  Var proj = model.project_head_x(g, pv, tr.hidden[model.cfg.loss.align_layer_x - 1]);
  Var sims = g.cosine_similarity(proj, g.leaf(zx));
  return g.mean(sims).value().item();
}

}  // namespace repdiff
