#include "repdiff/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "repdiff/metrics.hpp"
#include "repdiff/rng.hpp"

namespace repdiff {

AdamState AdamState::init(const AdamConfig& cfg, const Params& params) {
  AdamState st;
  st.cfg = cfg;
  for (const auto& [k, t] : params) {
    Tensor z = t;
    z.raw().assign(z.size(), 0.0);
    st.m[k] = z;
    st.v[k] = z;
  }
  return st;
}

void adam_step(AdamState& st, Params& params, const Params& grads) {
  ++st.step;
  const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, st.step);
  const double bc2 = 1.0 - std::pow(b2, st.step);
  for (auto& [name, p] : params) {
    const auto git = grads.find(name);
    if (git == grads.end()) throw std::invalid_argument("adam_step: missing gradient " + name);
    const Tensor& g = git->second;
    if (!g.same_shape(p)) throw std::invalid_argument("adam_step: shape mismatch " + name);
    Tensor& m = st.m[name];
    Tensor& v = st.v[name];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      if (!std::isfinite(gi))
        throw std::runtime_error("adam_step: non-finite gradient in " + name);
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.epsilon);
    }
  }
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "vanilla") return TrainMode::vanilla;
  if (s == "repa") return TrainMode::repa;
  if (s == "rcg") return TrainMode::rcg;
  if (s == "reed") return TrainMode::reed;
  if (s == "exact-elbo") return TrainMode::exact_elbo;
  if (s == "two-stage") return TrainMode::two_stage;
  throw std::invalid_argument("unknown train mode: " + s);
}

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::vanilla: return "vanilla";
    case TrainMode::repa: return "repa";
    case TrainMode::rcg: return "rcg";
    case TrainMode::reed: return "reed";
    case TrainMode::exact_elbo: return "exact-elbo";
    case TrainMode::two_stage: return "two-stage";
  }
  return "?";
}

LatentCache build_latent_cache(const ToyDataset& data, const Encoder& enc_x,
                               const SyntheticModality* modality, std::uint64_t pair_seed) {
  const std::size_t N = data.x.rows();
  LatentCache cache;
  cache.zx = Tensor::zeros(N, enc_x.out_dim());
  if (modality != nullptr) cache.zy = Tensor::zeros(N, modality->z_dim());
  std::vector<double> x0(2);
  for (std::size_t i = 0; i < N; ++i) {
    x0[0] = data.x.at(i, 0);
    x0[1] = data.x.at(i, 1);
    const auto zx = enc_x.encode(x0);
    for (std::size_t j = 0; j < zx.size(); ++j) cache.zx.at(i, j) = zx[j];
    if (modality != nullptr) {
      const auto s = modality->sample(x0, derive_seed(pair_seed, 0x9a12, i));
      for (std::size_t j = 0; j < s.zy.size(); ++j) cache.zy.at(i, j) = s.zy[j];
    }
  }
  return cache;
}

namespace {

// per-epoch loss weights; two_stage applies a hard switch between an
// alignment-only phase and a diffusion-only phase
void epoch_weights(TrainMode mode, const TrainSetup& setup, int epoch, double& alpha_n,
                   double& beta_n) {
  switch (mode) {
    case TrainMode::vanilla:
    case TrainMode::rcg:
    case TrainMode::repa:
    case TrainMode::exact_elbo:
      alpha_n = 1.0;
      beta_n = 1.0;
      break;
    case TrainMode::reed:
      alpha_n = curriculum_weight(setup.alpha_c, epoch);
      beta_n = curriculum_weight(setup.beta_c, epoch);
      break;
    case TrainMode::two_stage:
      if (epoch < setup.two_stage_switch) {
        alpha_n = 0.0;
        beta_n = curriculum_weight(setup.beta_c, 0);
      } else {
        alpha_n = setup.alpha_c.peak;
        beta_n = 0.0;
      }
      break;
  }
}

Tensor gather_rows_tensor(const Tensor& src, const std::vector<std::size_t>& idx) {
  if (src.size() == 0) return Tensor();
  const std::size_t C = src.cols();
  Tensor out = Tensor::zeros(idx.size(), C);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < C; ++j) out.at(i, j) = src.at(idx[i], j);
  return out;
}

}  // namespace

std::map<std::string, double> evaluate_model(const DiffusionModel& model, TrainMode mode,
                                             const ZPrior& prior, const ToyDataset& data,
                                             const TrainSetup& setup) {
  std::map<std::string, double> out;
  const ToyDataset ref =
      ToyDataset::ring_mixture(data.num_classes, static_cast<int>(setup.eval_samples),
                               data.radius, data.sigma, derive_seed(setup.eval_seed, 0xeba1));
  Tensor samples;
  if (mode == TrainMode::rcg)
    samples = rcg_sample(model, setup.ns, prior, setup.eval_samples,
                         derive_seed(setup.eval_seed, 0x5a21));
  else
    samples = ancestral_sample(model, setup.ns, setup.eval_samples, nullptr, nullptr,
                               derive_seed(setup.eval_seed, 0x5a21));
  out["sliced_wasserstein"] = sliced_wasserstein(samples, ref.x, setup.sw_projections,
                                                 derive_seed(setup.eval_seed, 0x5103));

  if (model.cfg.loss.lambda_x > 0.0) {
    // alignment quality on a held-out draw from the same mixture
    const ToyDataset held = ToyDataset::ring_mixture(
        data.num_classes, 1024, data.radius, data.sigma, derive_seed(setup.eval_seed, 0x8e1d));
    const LatentCache lc = build_latent_cache(
        held, setup.enc_x, setup.modality ? &*setup.modality : nullptr,
        derive_seed(setup.modality_pair_seed, 0x8e1e));
    out["alignment_cosine"] = alignment_cosine(model, setup.ns, held.x, lc.zx,
                                               setup.align_eval_t,
                                               derive_seed(setup.eval_seed, 0xa117));
  }
  return out;
}

TrainResult train(TrainMode mode, const ToyDataset& data, const TrainSetup& setup,
                  std::uint64_t seed) {
  if (data.x.rows() == 0) throw std::invalid_argument("train: empty dataset");
  if (setup.batch == 0) throw std::invalid_argument("train: batch size must be positive");

  // model parameters are seeded independently of the mode so that reductions
  // between modes compare like for like
  TrainResult res{DiffusionModel::init(setup.model, derive_seed(seed, 0x1717)), {}, {}, false,
                  {}};
  DiffusionModel& model = res.model;

  const SyntheticModality* modality = setup.modality ? &*setup.modality : nullptr;
  const bool use_zx = setup.model.loss.lambda_x > 0.0 || setup.model.den.latent_dim > 0;
  const bool use_zy = setup.model.loss.lambda_y > 0.0;
  LatentCache cache;
  if (use_zx || use_zy)
    cache = build_latent_cache(data, setup.enc_x, use_zy ? modality : nullptr,
                               setup.modality_pair_seed);

  AdamState adam = AdamState::init(setup.adam, model.params);
  const std::size_t N = data.x.rows();
  const std::size_t nbatches = (N + setup.batch - 1) / setup.batch;

  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < setup.epochs; ++epoch) {
    const auto tic = std::chrono::steady_clock::now();
    double alpha_n = 1.0, beta_n = 1.0;
    epoch_weights(mode, setup, epoch, alpha_n, beta_n);

    // deterministic shuffle per (seed, epoch)
    {
      Rng rng(derive_seed(seed, 0x0d23, epoch));
      for (std::size_t i = N; i > 1; --i) {
        const std::size_t j = rng.uniform_index(i);
        std::swap(order[i - 1], order[j]);
      }
    }

    RunRecord rec;
    rec.epoch = epoch;
    rec.mode = to_string(mode);
    rec.seed = seed;
    rec.alpha_n = alpha_n;
    rec.beta_n = beta_n;

    double acc_total = 0, acc_diff = 0, acc_rep = 0, acc_ln = 0;
    for (std::size_t b = 0; b < nbatches; ++b) {
      const std::size_t lo = b * setup.batch;
      const std::size_t hi = std::min(lo + setup.batch, N);
      std::vector<std::size_t> idx(order.begin() + lo, order.begin() + hi);

      DiffusionModel::Batch batch;
      batch.x0 = gather_rows_tensor(data.x, idx);
      if (setup.model.den.num_classes > 0) {
        batch.labels.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) batch.labels[i] = data.labels[idx[i]];
      }
      batch.draws = draw_diffusion_batch(setup.ns, idx.size(), setup.model.den.x_dim,
                                         derive_seed(seed, 0xba7c, epoch, b));
      if (use_zx) batch.zx = gather_rows_tensor(cache.zx, idx);
      if (use_zy) batch.zy = gather_rows_tensor(cache.zy, idx);

      Graph g;
      ParamVars pv = param_leaves(g, model.params);
      const auto expr = model.loss_expr(g, pv, setup.ns, batch, &setup.hybrid_weights,
                                        alpha_n, beta_n);
      const double total = expr.total.value().item();
      if (!std::isfinite(total)) {
        res.diverged = true;
        res.divergence_info = "non-finite loss at epoch " + std::to_string(epoch) +
                              " batch " + std::to_string(b) + " (seed " +
                              std::to_string(seed) + ")";
        res.records.push_back(rec);
        return res;
      }
      acc_total += total;
      acc_diff += expr.diffusion.value().item();
      acc_rep += expr.repgen.value().item();
      acc_ln += expr.lognorm.value().item();

      g.backward(expr.total);
      Params grads;
      for (const auto& [name, var] : pv.vars) grads[name] = var.grad();
      adam_step(adam, model.params, grads);
    }

    rec.loss_total = acc_total / nbatches;
    rec.loss_diffusion = acc_diff / nbatches;
    rec.loss_repgen = acc_rep / nbatches;
    rec.loss_lognorm = acc_ln / nbatches;

    const bool last = epoch == setup.epochs - 1;
    const bool eval_now = last || (setup.eval_every > 0 && (epoch + 1) % setup.eval_every == 0);
    if (eval_now) {
      if (mode == TrainMode::rcg)
        res.z_prior = fit_z_prior(cache.zx, data.labels, data.num_classes);
      rec.metrics = evaluate_model(model, mode, res.z_prior, data, setup);
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - tic)
                      .count();
    res.records.push_back(rec);
  }

  if (mode == TrainMode::rcg && !res.z_prior.fitted)
    res.z_prior = fit_z_prior(cache.zx, data.labels, data.num_classes);
  return res;
}

}  // namespace repdiff
