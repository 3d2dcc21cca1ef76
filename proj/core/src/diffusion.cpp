#include "repdiff/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "repdiff/rng.hpp"

namespace repdiff {

namespace {

Tensor random_weight(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = Tensor::zeros(rows, cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = scale * rng.normal();
  return w;
}

void init_mlp(Params& p, const std::string& prefix, const std::vector<std::size_t>& dims,
              std::uint64_t seed) {
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    p[prefix + "l" + std::to_string(l) + ".W"] =
        random_weight(dims[l], dims[l + 1], derive_seed(seed, 0x11, l));
    p[prefix + "l" + std::to_string(l) + ".b"] = Tensor::zeros(dims[l + 1]);
  }
}

// 3-layer projection head: in -> hidden -> hidden -> out, SiLU between,
// rows L2-normalized at the output (latents live on the unit sphere)
Var head_project(Graph& g, const ParamVars& pv, const std::string& prefix, Var h) {
  Var a = g.silu(g.add_rowvec(g.matmul(h, pv.at(prefix + "l0.W")), pv.at(prefix + "l0.b")));
  Var b = g.silu(g.add_rowvec(g.matmul(a, pv.at(prefix + "l1.W")), pv.at(prefix + "l1.b")));
  Var c = g.add_rowvec(g.matmul(b, pv.at(prefix + "l2.W")), pv.at(prefix + "l2.b"));
  return g.l2_normalize(c);
}

}  // namespace

Tensor flatten_params(const Params& p) {
  std::size_t n = 0;
  for (const auto& [k, v] : p) n += v.size();
  Tensor flat = Tensor::zeros(n);
  std::size_t off = 0;
  for (const auto& [k, v] : p) {
    for (std::size_t i = 0; i < v.size(); ++i) flat[off + i] = v[i];
    off += v.size();
  }
  return flat;
}

void unflatten_params(const Tensor& flat, Params& out) {
  std::size_t off = 0;
  for (auto& [k, v] : out) {
    if (off + v.size() > flat.size())
      throw std::invalid_argument("unflatten_params: flat vector too short");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = flat[off + i];
    off += v.size();
  }
  if (off != flat.size())
    throw std::invalid_argument("unflatten_params: flat vector length mismatch");
}

const Var& ParamVars::at(const std::string& name) const {
  const auto it = vars.find(name);
  if (it == vars.end()) throw std::out_of_range("ParamVars: unknown parameter " + name);
  return it->second;
}

ParamVars param_leaves(Graph& g, const Params& p) {
  ParamVars pv;
  for (const auto& [k, v] : p) pv.vars.emplace(k, g.leaf(v));
  return pv;
}

ParamVars param_views(Graph& g, Var flat, const Params& shapes) {
  ParamVars pv;
  std::size_t off = 0;
  for (const auto& [k, v] : shapes) {
    Var seg = g.slice_cols(flat, off, off + v.size());
    pv.vars.emplace(k, v.rank() == 2 ? g.reshape(seg, v.shape()) : seg);
    off += v.size();
  }
  return pv;
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "vanilla") return LossMode::vanilla;
  if (s == "repa") return LossMode::repa;
  if (s == "rcg") return LossMode::rcg;
  if (s == "reed") return LossMode::reed;
  if (s == "exact-elbo") return LossMode::exact_elbo;
  throw std::invalid_argument("unknown loss mode: " + s);
}

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::vanilla: return "vanilla";
    case LossMode::repa: return "repa";
    case LossMode::rcg: return "rcg";
    case LossMode::reed: return "reed";
    case LossMode::exact_elbo: return "exact-elbo";
  }
  return "?";
}

std::vector<double> forward_sample(const NoiseSchedule& ns, const std::vector<double>& x0,
                                   int t, const std::vector<double>& noise) {
  if (t < 1 || t > ns.T) throw std::invalid_argument("forward_sample: t outside [1, T]");
  if (x0.size() != noise.size())
    throw std::invalid_argument("forward_sample: x0/noise dimension mismatch");
  const double a = std::sqrt(ns.alpha_bar[t - 1]);
  const double b = std::sqrt(1.0 - ns.alpha_bar[t - 1]);
  std::vector<double> xt(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) xt[i] = a * x0[i] + b * noise[i];
  return xt;
}

Tensor forward_sample_batch(const NoiseSchedule& ns, const Tensor& x0,
                            const std::vector<int>& t, const Tensor& noise) {
  if (x0.rows() != t.size() || !x0.same_shape(noise))
    throw std::invalid_argument("forward_sample_batch: shape mismatch");
  Tensor xt = x0;
  const std::size_t C = x0.cols();
  for (std::size_t i = 0; i < x0.rows(); ++i) {
    if (t[i] < 1 || t[i] > ns.T)
      throw std::invalid_argument("forward_sample_batch: t outside [1, T]");
    const double abar = ns.alpha_bar[t[i] - 1];
    const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
    for (std::size_t j = 0; j < C; ++j)
      xt[i * C + j] = a * x0[i * C + j] + b * noise[i * C + j];
  }
  return xt;
}

DiffusionDraws draw_diffusion_batch(const NoiseSchedule& ns, std::size_t batch, int x_dim,
                                    std::uint64_t seed) {
  Rng rng(seed);
  DiffusionDraws d;
  d.t.resize(batch);
  d.noise = Tensor::zeros(batch, x_dim);
  for (std::size_t i = 0; i < batch; ++i) {
    d.t[i] = 1 + static_cast<int>(rng.uniform_index(ns.T));
    for (int j = 0; j < x_dim; ++j) d.noise[i * x_dim + j] = rng.normal();
  }
  return d;
}

DiffusionModel DiffusionModel::init(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.den.time_embed % 2 != 0 || cfg.den.time_embed < 2)
    throw std::invalid_argument("DiffusionModel: time_embed must be a positive even number");
  if (cfg.den.depth < 1) throw std::invalid_argument("DiffusionModel: depth must be >= 1");
  if (cfg.den.latent_dim > 0 &&
      (cfg.den.inject_layer < 1 || cfg.den.inject_layer > cfg.den.depth))
    throw std::invalid_argument("DiffusionModel: inject_layer outside [1, depth]");
  const bool needs_head_x = cfg.loss.lambda_x > 0.0;
  const bool needs_head_y = cfg.loss.lambda_y > 0.0;
  if (needs_head_x && (cfg.loss.align_layer_x < 1 || cfg.loss.align_layer_x > cfg.den.depth))
    throw std::invalid_argument("DiffusionModel: align_layer_x outside [1, depth]");
  if (needs_head_y && (cfg.loss.align_layer_y < 1 || cfg.loss.align_layer_y > cfg.den.depth))
    throw std::invalid_argument("DiffusionModel: align_layer_y outside [1, depth]");
  if (needs_head_x && needs_head_y && cfg.loss.align_layer_x == cfg.loss.align_layer_y)
    throw std::invalid_argument("DiffusionModel: duplicate alignment layer");
  if (cfg.loss.mode == LossMode::exact_elbo && needs_head_x &&
      cfg.loss.align_layer_x >= cfg.den.inject_layer)
    throw std::invalid_argument(
        "DiffusionModel: exact-elbo alignment layer must sit below the injection layer");

  DiffusionModel m;
  m.cfg = cfg;

  std::size_t in = cfg.den.x_dim + cfg.den.time_embed;
  if (cfg.den.num_classes > 0) in += cfg.den.class_embed;
  // per-layer weight shapes; the injected latent widens the input of exactly
  // one layer (the concat happens right before that layer's matmul)
  {
    const std::uint64_t den_seed = derive_seed(seed, 0xde0);
    std::size_t prev = in;
    for (int l = 1; l <= cfg.den.depth; ++l) {
      std::size_t rows = prev;
      if (cfg.den.latent_dim > 0 && l == cfg.den.inject_layer) rows += cfg.den.latent_dim;
      const std::string key = "den.l" + std::to_string(l - 1);
      m.params[key + ".W"] = random_weight(rows, cfg.den.width, derive_seed(den_seed, 0x11, l));
      m.params[key + ".b"] = Tensor::zeros(cfg.den.width);
      prev = cfg.den.width;
    }
    const std::string out_key = "den.l" + std::to_string(cfg.den.depth);
    m.params[out_key + ".W"] =
        random_weight(prev, cfg.den.x_dim, derive_seed(den_seed, 0x11, cfg.den.depth + 1));
    m.params[out_key + ".b"] = Tensor::zeros(cfg.den.x_dim);
  }

  if (cfg.den.num_classes > 0)
    m.params["den.class.table"] =
        random_weight(cfg.den.num_classes, cfg.den.class_embed, derive_seed(seed, 0xc1a5));
  if (cfg.den.latent_dim > 0) {
    Rng rng(derive_seed(seed, 0xd033));
    Tensor dummy = Tensor::zeros(cfg.den.latent_dim);
    for (int i = 0; i < cfg.den.latent_dim; ++i) dummy[i] = 0.01 * rng.normal();
    m.params["den.dummy.z"] = dummy;
  }

  if (needs_head_x) {
    init_mlp(m.params, "headx.",
             {static_cast<std::size_t>(cfg.head_x.in_dim),
              static_cast<std::size_t>(cfg.head_x.hidden),
              static_cast<std::size_t>(cfg.head_x.hidden),
              static_cast<std::size_t>(cfg.head_x.out_dim)},
             derive_seed(seed, 0x8ead, 1));
  }
  if (needs_head_y) {
    init_mlp(m.params, "heady.",
             {static_cast<std::size_t>(cfg.head_y.in_dim),
              static_cast<std::size_t>(cfg.head_y.hidden),
              static_cast<std::size_t>(cfg.head_y.hidden),
              static_cast<std::size_t>(cfg.head_y.out_dim)},
             derive_seed(seed, 0x8ead, 2));
  }
  return m;
}

Tensor DiffusionModel::time_embedding(const std::vector<int>& t) const {
  const int D = cfg.den.time_embed;
  Tensor emb = Tensor::zeros(t.size(), D);
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (int k = 0; k < D / 2; ++k) {
      const double freq = std::pow(10000.0, -2.0 * k / D);
      emb[i * D + 2 * k] = std::sin(t[i] * freq);
      emb[i * D + 2 * k + 1] = std::cos(t[i] * freq);
    }
  }
  return emb;
}

Var DiffusionModel::project_head_x(Graph& g, const ParamVars& pv, Var h) const {
  return head_project(g, pv, "headx.", h);
}

Var DiffusionModel::project_head_y(Graph& g, const ParamVars& pv, Var h) const {
  return head_project(g, pv, "heady.", h);
}

DiffusionModel::Trace DiffusionModel::forward(Graph& g, const ParamVars& pv, Var xt,
                                              const std::vector<int>& t,
                                              const std::vector<int>* labels, const Var* latent,
                                              bool use_dummy_latent) const {
  const auto& dc = cfg.den;
  const std::size_t B = xt.value().rows();
  if (t.size() != B) throw std::invalid_argument("forward: timestep count mismatch");

  Var h = g.concat_cols(xt, g.leaf(time_embedding(t)));
  if (dc.num_classes > 0) {
    if (labels == nullptr || labels->size() != B)
      throw std::invalid_argument("forward: class-conditional model needs labels");
    h = g.concat_cols(h, g.gather_rows(pv.at("den.class.table"), *labels));
  }

  Trace tr;
  for (int l = 1; l <= dc.depth; ++l) {
    if (dc.latent_dim > 0 && l == dc.inject_layer) {
      Var z;
      if (use_dummy_latent) {
        Var drow = g.reshape(pv.at("den.dummy.z"), {1, static_cast<std::size_t>(dc.latent_dim)});
        z = g.matmul(g.leaf(Tensor::full(B, 1, 1.0)), drow);  // broadcast to the batch
      } else {
        if (latent == nullptr)
          throw std::invalid_argument("forward: latent input required by this configuration");
        z = *latent;
      }
      h = g.concat_cols(h, z);
    }
    const std::string key = "den.l" + std::to_string(l - 1);
    h = g.silu(g.add_rowvec(g.matmul(h, pv.at(key + ".W")), pv.at(key + ".b")));
    tr.hidden.push_back(h);
  }
  const std::string out_key = "den.l" + std::to_string(dc.depth);
  tr.out = g.add_rowvec(g.matmul(h, pv.at(out_key + ".W")), pv.at(out_key + ".b"));
  return tr;
}

DiffusionModel::LossExpr DiffusionModel::loss_expr(Graph& g, const ParamVars& pv,
                                                   const NoiseSchedule& ns, const Batch& batch,
                                                   const WeightSchedule* A, double alpha_n,
                                                   double beta_n) const {
  const auto& lc = cfg.loss;
  const std::size_t B = batch.x0.rows();
  if (B == 0) throw std::invalid_argument("loss_expr: empty batch");

  Var xt = g.leaf(forward_sample_batch(ns, batch.x0, batch.draws.t, batch.draws.noise));
  Var noise = g.leaf(batch.draws.noise);
  const std::vector<int>* labels = batch.labels.empty() ? nullptr : &batch.labels;

  auto mse_to_noise = [&](Var pred) {
    Var diff = g.sub(pred, noise);
    return g.mean(g.sum_axis(g.mul(diff, diff), 1));
  };

  auto repgen_from_hidden = [&](const std::vector<Var>& hidden) {
    // zero weights contribute a literal +0 so that disabling alignment
    // reproduces the plain objective bit for bit
    if (lc.lambda_x <= 0.0 && lc.lambda_y <= 0.0) return g.leaf(Tensor::scalar(0.0));
    Var acc = g.leaf(Tensor::scalar(0.0));
    if (lc.lambda_x > 0.0) {
      Var proj = head_project(g, pv, "headx.", hidden[lc.align_layer_x - 1]);
      acc = g.add(acc, g.scale(g.mean(g.cosine_similarity(proj, g.leaf(batch.zx))),
                               lc.lambda_x));
    }
    if (lc.lambda_y > 0.0) {
      Var proj = head_project(g, pv, "heady.", hidden[lc.align_layer_y - 1]);
      acc = g.add(acc, g.scale(g.mean(g.cosine_similarity(proj, g.leaf(batch.zy))),
                               lc.lambda_y));
    }
    return g.scale(acc, -1.0);
  };

  LossExpr e;
  e.lognorm = g.leaf(Tensor::scalar(0.0));

  switch (lc.mode) {
    case LossMode::vanilla: {
      Trace tr = forward(g, pv, xt, batch.draws.t, labels, nullptr);
      e.diffusion = mse_to_noise(tr.out);
      e.repgen = g.leaf(Tensor::scalar(0.0));
      break;
    }
    case LossMode::repa:
    case LossMode::reed: {
      Trace tr = forward(g, pv, xt, batch.draws.t, labels, nullptr);
      e.diffusion = mse_to_noise(tr.out);
      e.repgen = repgen_from_hidden(tr.hidden);
      break;
    }
    case LossMode::rcg: {
      // conditional training on the ground-truth representation
      Var zx = g.leaf(batch.zx);
      Trace tr = forward(g, pv, xt, batch.draws.t, labels, &zx);
      e.diffusion = mse_to_noise(tr.out);
      e.repgen = g.leaf(Tensor::scalar(0.0));
      break;
    }
    case LossMode::exact_elbo: {
      if (A == nullptr)
        throw std::invalid_argument("loss_expr: exact-elbo requires a weight schedule");
      Var zx = g.leaf(batch.zx);
      Trace cond = forward(g, pv, xt, batch.draws.t, labels, &zx, false);
      Trace unc = forward(g, pv, xt, batch.draws.t, labels, nullptr, true);

      // per-sample hybrid weight A_t and the log-normalizer coefficient
      // A(1-A) c_t^2 / (2 sigma_t^2), with mu_c - mu_u = -c_t (eps_c - eps_u),
      // c_t = beta_t / (sqrt(alpha_t) sqrt(1-abar_t)). The model reverse
      // variance is taken as sigma_t^2 = beta_t, which stays positive at t=1
      // (the forward-posterior variance vanishes there).
      Tensor Avec = Tensor::zeros(B), Bvec = Tensor::zeros(B), lnc = Tensor::zeros(B);
      for (std::size_t i = 0; i < B; ++i) {
        const int t = batch.draws.t[i];
        const double At = A->At(t);
        const double beta = ns.beta[t - 1];
        const double alpha = 1.0 - beta;
        const double abar = ns.alpha_bar[t - 1];
        Avec[i] = At;
        Bvec[i] = 1.0 - At;
        lnc[i] = At * (1.0 - At) * beta / (2.0 * alpha * (1.0 - abar));
      }
      Var predw =
          g.add(g.scale_rows(cond.out, g.leaf(Avec)), g.scale_rows(unc.out, g.leaf(Bvec)));
      e.diffusion = mse_to_noise(predw);

      Var cond_for_ln = lc.stopgrad_conditional ? g.leaf(cond.out.value()) : cond.out;
      Var dd = g.sub(cond_for_ln, unc.out);
      Var per = g.sum_axis(g.mul(dd, dd), 1);
      e.lognorm = g.scale(g.mean(g.mul(per, g.leaf(lnc))), lc.lognorm_weight);

      // alignment on the shared trunk (below the injection layer)
      e.repgen = repgen_from_hidden(cond.hidden);
      break;
    }
  }

  e.total = g.add(g.add(g.scale(e.diffusion, alpha_n), g.scale(e.repgen, beta_n)), e.lognorm);
  return e;
}

DiffusionModel::LossValues DiffusionModel::eval_loss(const NoiseSchedule& ns, const Batch& batch,
                                                     const WeightSchedule* A, double alpha_n,
                                                     double beta_n) const {
  Graph g;
  ParamVars pv = param_leaves(g, params);
  const LossExpr e = loss_expr(g, pv, ns, batch, A, alpha_n, beta_n);
  LossValues v;
  v.total = e.total.value().item();
  v.diffusion = e.diffusion.value().item();
  v.repgen = e.repgen.value().item();
  v.lognorm = e.lognorm.value().item();
  return v;
}

Tensor ancestral_sample(const DiffusionModel& model, const NoiseSchedule& ns, std::size_t count,
                        const std::vector<int>* labels, const Tensor* latents,
                        std::uint64_t seed) {
  if (count == 0) throw std::invalid_argument("ancestral_sample: count must be positive");
  const int D = model.cfg.den.x_dim;
  const bool wants_latent = model.cfg.den.latent_dim > 0;
  if (latents != nullptr && (!wants_latent || latents->rows() != count))
    throw std::invalid_argument("ancestral_sample: latent shape mismatch");

  Rng rng(derive_seed(seed, 0x5a4d));
  Tensor x = Tensor::zeros(count, D);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();

  for (int t = ns.T; t >= 1; --t) {
    Graph g;
    ParamVars pv = param_leaves(g, model.params);
    Var xt = g.leaf(x);
    const std::vector<int> ts(count, t);
    Var lat;
    const Var* lat_ptr = nullptr;
    bool dummy = false;
    if (wants_latent) {
      if (latents != nullptr) {
        lat = g.leaf(*latents);
        lat_ptr = &lat;
      } else {
        dummy = true;  // unconditional branch of a latent-conditioned model
      }
    }
    const auto tr = model.forward(g, pv, xt, ts, labels, lat_ptr, dummy);
    const Tensor& eps = tr.out.value();

    const double beta = ns.beta[t - 1];
    const double alpha = 1.0 - beta;
    const double abar = ns.alpha_bar[t - 1];
    const double c_eps = beta / std::sqrt(1.0 - abar);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    const double sig = ns.sigma[t - 1];
    for (std::size_t i = 0; i < count; ++i) {
      for (int j = 0; j < D; ++j) {
        double mu = inv_sqrt_alpha * (x[i * D + j] - c_eps * eps[i * D + j]);
        if (t > 1) mu += sig * rng.normal();
        x[i * D + j] = mu;
        if (!std::isfinite(mu))
          throw std::runtime_error("ancestral_sample: non-finite state at step " +
                                   std::to_string(t));
      }
    }
  }
  return x;
}

ZPrior fit_z_prior(const Tensor& latents, const std::vector<int>& labels, int num_classes) {
  if (latents.rank() != 2 || latents.rows() != labels.size() || latents.rows() == 0)
    throw std::invalid_argument("fit_z_prior: latent/label shape mismatch");
  const std::size_t dz = latents.cols();
  ZPrior p;
  p.means = Tensor::zeros(num_classes, dz);
  p.var.assign(num_classes, 0.0);
  p.weight.assign(num_classes, 0.0);
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < latents.rows(); ++i) {
    const int k = labels[i];
    if (k < 0 || k >= num_classes) throw std::invalid_argument("fit_z_prior: label out of range");
    ++counts[k];
    for (std::size_t j = 0; j < dz; ++j) p.means.at(k, j) += latents.at(i, j);
  }
  for (int k = 0; k < num_classes; ++k) {
    if (counts[k] == 0) continue;
    for (std::size_t j = 0; j < dz; ++j) p.means.at(k, j) /= counts[k];
  }
  for (std::size_t i = 0; i < latents.rows(); ++i) {
    const int k = labels[i];
    double d2 = 0.0;
    for (std::size_t j = 0; j < dz; ++j) {
      const double d = latents.at(i, j) - p.means.at(k, j);
      d2 += d * d;
    }
    p.var[k] += d2;
  }
  const double n = static_cast<double>(latents.rows());
  for (int k = 0; k < num_classes; ++k) {
    p.weight[k] = counts[k] / n;
    p.var[k] = counts[k] > 0 ? p.var[k] / (counts[k] * dz) : 0.0;
  }
  p.fitted = true;
  return p;
}

Tensor rcg_sample(const DiffusionModel& model, const NoiseSchedule& ns, const ZPrior& prior,
                  std::size_t count, std::uint64_t seed) {
  if (!prior.fitted) throw std::invalid_argument("rcg_sample: prior has not been fitted");
  const std::size_t dz = prior.means.cols();
  Rng rng(derive_seed(seed, 0x2c65));
  Tensor z = Tensor::zeros(count, dz);
  for (std::size_t i = 0; i < count; ++i) {
    // component by mixing weight
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t k = 0;
    for (std::size_t c = 0; c < prior.weight.size(); ++c) {
      acc += prior.weight[c];
      if (u < acc) {
        k = c;
        break;
      }
      k = c;
    }
    const double sd = std::sqrt(prior.var[k]);
    double norm2 = 0.0;
    for (std::size_t j = 0; j < dz; ++j) {
      z.at(i, j) = prior.means.at(k, j) + sd * rng.normal();
      norm2 += z.at(i, j) * z.at(i, j);
    }
    const double nrm = std::sqrt(norm2);
    if (nrm == 0.0) throw std::runtime_error("rcg_sample: degenerate zero latent");
    for (std::size_t j = 0; j < dz; ++j) z.at(i, j) /= nrm;  // unit-normalize before use
  }
  return ancestral_sample(model, ns, count, nullptr, &z, derive_seed(seed, 0x2c66));
}

}  // namespace repdiff
