#include "repdiff/config.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "repdiff/report.hpp"
#include "repdiff/rng.hpp"

namespace repdiff {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& section,
                    const std::set<std::string>& allowed) {
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

bool get_seed(const json& j, const char* key, std::uint64_t& out) {
  if (j.contains(key)) {
    out = j.at(key).get<std::uint64_t>();
    return true;
  }
  return false;
}

ExperimentConfig::CurriculumCfg parse_curriculum(const json& j, const std::string& section,
                                                 ExperimentConfig::CurriculumCfg def) {
  reject_unknown(j, section, {"kind", "warmup", "peak", "floor"});
  get_if(j, "kind", def.kind);
  get_if(j, "warmup", def.warmup);
  get_if(j, "peak", def.peak);
  get_if(j, "floor", def.floor);
  curriculum_kind_from_string(def.kind);  // validates
  return def;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");
  reject_unknown(j, "<root>",
                 {"schema_version", "dataset", "noise-schedule", "weight-schedule", "curricula",
                  "encoders", "modality", "denoiser", "loss", "trainer", "metrics", "sweep",
                  "verify", "tvscaling", "bound"});
  if (!j.contains("schema_version")) throw ConfigError("missing mandatory 'schema_version'");

  ExperimentConfig c;
  c.schema_version = j.at("schema_version").get<int>();
  if (c.schema_version != 1)
    throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version));

  if (j.contains("dataset")) {
    const auto& s = j.at("dataset");
    reject_unknown(s, "dataset", {"components", "points", "radius", "sigma", "seed"});
    get_if(s, "components", c.dataset.components);
    get_if(s, "points", c.dataset.points);
    get_if(s, "radius", c.dataset.radius);
    get_if(s, "sigma", c.dataset.sigma);
    c.dataset.has_seed = get_seed(s, "seed", c.dataset.seed);
  }

  if (j.contains("noise-schedule")) {
    const auto& s = j.at("noise-schedule");
    reject_unknown(s, "noise-schedule", {"kind", "T", "beta_min", "beta_max"});
    get_if(s, "kind", c.noise.kind);
    get_if(s, "T", c.noise.T);
    get_if(s, "beta_min", c.noise.beta_min);
    get_if(s, "beta_max", c.noise.beta_max);
    noise_kind_from_string(c.noise.kind);
  }

  if (j.contains("weight-schedule")) {
    const auto& s = j.at("weight-schedule");
    reject_unknown(s, "weight-schedule", {"kind"});
    get_if(s, "kind", c.weights.kind);
    if (c.weights.kind != "uniform" && c.weights.kind != "rcg")
      throw ConfigError("weight-schedule.kind must be 'uniform' or 'rcg'");
  }

  if (j.contains("curricula")) {
    const auto& s = j.at("curricula");
    reject_unknown(s, "curricula", {"alpha", "beta"});
    if (s.contains("alpha"))
      c.alpha_curriculum = parse_curriculum(s.at("alpha"), "curricula.alpha", c.alpha_curriculum);
    if (s.contains("beta"))
      c.beta_curriculum = parse_curriculum(s.at("beta"), "curricula.beta", c.beta_curriculum);
  }

  if (j.contains("encoders")) {
    const auto& s = j.at("encoders");
    reject_unknown(s, "encoders", {"x"});
    if (s.contains("x")) {
      const auto& e = s.at("x");
      reject_unknown(e, "encoders.x", {"kind", "out_dim", "hidden", "seed"});
      get_if(e, "kind", c.encoder_x.kind);
      get_if(e, "out_dim", c.encoder_x.out_dim);
      get_if(e, "hidden", c.encoder_x.hidden);
      c.encoder_x.has_seed = get_seed(e, "seed", c.encoder_x.seed);
      if (c.encoder_x.kind != "class-prototype" && c.encoder_x.kind != "random-feature")
        throw ConfigError("encoders.x.kind must be 'class-prototype' or 'random-feature'");
    }
  }

  if (j.contains("modality")) {
    const auto& s = j.at("modality");
    reject_unknown(s, "modality",
                   {"enabled", "y_dim", "noise_std", "enc_hidden", "enc_out_dim", "seed"});
    get_if(s, "enabled", c.modality.enabled);
    get_if(s, "y_dim", c.modality.y_dim);
    get_if(s, "noise_std", c.modality.noise_std);
    get_if(s, "enc_hidden", c.modality.enc_hidden);
    get_if(s, "enc_out_dim", c.modality.enc_out_dim);
    c.modality.has_seed = get_seed(s, "seed", c.modality.seed);
  }

  if (j.contains("denoiser")) {
    const auto& s = j.at("denoiser");
    reject_unknown(s, "denoiser", {"depth", "width", "time_embed", "inject_layer"});
    get_if(s, "depth", c.denoiser.depth);
    get_if(s, "width", c.denoiser.width);
    get_if(s, "time_embed", c.denoiser.time_embed);
    get_if(s, "inject_layer", c.denoiser.inject_layer);
  }

  if (j.contains("loss")) {
    const auto& s = j.at("loss");
    reject_unknown(s, "loss",
                   {"lambda_x", "lambda_y", "lognorm_weight", "stopgrad_conditional",
                    "align_layer_x", "align_layer_y"});
    get_if(s, "lambda_x", c.loss.lambda_x);
    get_if(s, "lambda_y", c.loss.lambda_y);
    get_if(s, "lognorm_weight", c.loss.lognorm_weight);
    get_if(s, "stopgrad_conditional", c.loss.stopgrad_conditional);
    get_if(s, "align_layer_x", c.loss.align_layer_x);
    get_if(s, "align_layer_y", c.loss.align_layer_y);
    if (c.loss.lambda_x < 0 || c.loss.lambda_y < 0 || c.loss.lognorm_weight < 0)
      throw ConfigError("loss weights must be nonnegative");
  }

  if (j.contains("trainer")) {
    const auto& s = j.at("trainer");
    reject_unknown(s, "trainer",
                   {"lr", "adam_beta1", "adam_beta2", "adam_eps", "batch", "epochs",
                    "eval_every", "eval_samples", "two_stage_switch"});
    get_if(s, "lr", c.trainer.lr);
    get_if(s, "adam_beta1", c.trainer.adam_beta1);
    get_if(s, "adam_beta2", c.trainer.adam_beta2);
    get_if(s, "adam_eps", c.trainer.adam_eps);
    get_if(s, "batch", c.trainer.batch);
    get_if(s, "epochs", c.trainer.epochs);
    get_if(s, "eval_every", c.trainer.eval_every);
    get_if(s, "eval_samples", c.trainer.eval_samples);
    get_if(s, "two_stage_switch", c.trainer.two_stage_switch);
  }

  if (j.contains("metrics")) {
    const auto& s = j.at("metrics");
    reject_unknown(s, "metrics", {"sw_projections", "align_eval_t", "eval_seed"});
    get_if(s, "sw_projections", c.metrics.sw_projections);
    get_if(s, "align_eval_t", c.metrics.align_eval_t);
    c.metrics.has_seed = get_seed(s, "eval_seed", c.metrics.eval_seed);
  }

  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    reject_unknown(s, "sweep", {"modes", "seeds"});
    get_if(s, "modes", c.sweep.modes);
    get_if(s, "seeds", c.sweep.seeds);
    for (const auto& m : c.sweep.modes) train_mode_from_string(m);
  }

  if (j.contains("verify")) {
    const auto& s = j.at("verify");
    reject_unknown(s, "verify",
                   {"seed", "decomp_instances", "marginal_instances", "prop1_instances",
                    "lognorm_instances", "multilatent_instances", "vb_pairs",
                    "hybrid_instances", "hybrid_points", "quad_draws"});
    c.verify.has_seed = get_seed(s, "seed", c.verify.seed);
    get_if(s, "decomp_instances", c.verify.decomp_instances);
    get_if(s, "marginal_instances", c.verify.marginal_instances);
    get_if(s, "prop1_instances", c.verify.prop1_instances);
    get_if(s, "lognorm_instances", c.verify.lognorm_instances);
    get_if(s, "multilatent_instances", c.verify.multilatent_instances);
    get_if(s, "vb_pairs", c.verify.vb_pairs);
    get_if(s, "hybrid_instances", c.verify.hybrid_instances);
    get_if(s, "hybrid_points", c.verify.hybrid_points);
    get_if(s, "quad_draws", c.verify.quad_draws);
  }

  if (j.contains("tvscaling")) {
    const auto& s = j.at("tvscaling");
    reject_unknown(s, "tvscaling",
                   {"mu0", "s0", "T_time", "step_counts", "samples", "bins", "seed"});
    get_if(s, "mu0", c.tvscaling.mu0);
    get_if(s, "s0", c.tvscaling.s0);
    get_if(s, "T_time", c.tvscaling.T_time);
    get_if(s, "step_counts", c.tvscaling.step_counts);
    get_if(s, "samples", c.tvscaling.samples);
    get_if(s, "bins", c.tvscaling.bins);
    c.tvscaling.has_seed = get_seed(s, "seed", c.tvscaling.seed);
  }

  if (j.contains("bound")) {
    const auto& s = j.at("bound");
    reject_unknown(s, "bound", {"kl_to_gauss", "L", "d", "m", "h", "T_time", "eps_const"});
    get_if(s, "kl_to_gauss", c.bound.kl_to_gauss);
    get_if(s, "L", c.bound.L);
    get_if(s, "d", c.bound.d);
    get_if(s, "m", c.bound.m);
    get_if(s, "h", c.bound.h);
    get_if(s, "T_time", c.bound.T_time);
    get_if(s, "eps_const", c.bound.eps_const);
  }

  c.hash = fnv1a_hex(canonical_config_json(c));
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_config_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["dataset"] = {{"components", c.dataset.components}, {"points", c.dataset.points},
                  {"radius", c.dataset.radius},         {"sigma", c.dataset.sigma},
                  {"seed", c.dataset.seed},             {"has_seed", c.dataset.has_seed}};
  j["noise-schedule"] = {{"kind", c.noise.kind},
                         {"T", c.noise.T},
                         {"beta_min", c.noise.beta_min},
                         {"beta_max", c.noise.beta_max}};
  j["weight-schedule"] = {{"kind", c.weights.kind}};
  auto cur = [](const ExperimentConfig::CurriculumCfg& cc) {
    return json{{"kind", cc.kind}, {"warmup", cc.warmup}, {"peak", cc.peak}, {"floor", cc.floor}};
  };
  j["curricula"] = {{"alpha", cur(c.alpha_curriculum)}, {"beta", cur(c.beta_curriculum)}};
  j["encoders"] = {{"x",
                    {{"kind", c.encoder_x.kind},
                     {"out_dim", c.encoder_x.out_dim},
                     {"hidden", c.encoder_x.hidden},
                     {"seed", c.encoder_x.seed},
                     {"has_seed", c.encoder_x.has_seed}}}};
  j["modality"] = {{"enabled", c.modality.enabled},     {"y_dim", c.modality.y_dim},
                   {"noise_std", c.modality.noise_std}, {"enc_hidden", c.modality.enc_hidden},
                   {"enc_out_dim", c.modality.enc_out_dim}, {"seed", c.modality.seed},
                   {"has_seed", c.modality.has_seed}};
  j["denoiser"] = {{"depth", c.denoiser.depth},
                   {"width", c.denoiser.width},
                   {"time_embed", c.denoiser.time_embed},
                   {"inject_layer", c.denoiser.inject_layer}};
  j["loss"] = {{"lambda_x", c.loss.lambda_x},
               {"lambda_y", c.loss.lambda_y},
               {"lognorm_weight", c.loss.lognorm_weight},
               {"stopgrad_conditional", c.loss.stopgrad_conditional},
               {"align_layer_x", c.loss.align_layer_x},
               {"align_layer_y", c.loss.align_layer_y}};
  j["trainer"] = {{"lr", c.trainer.lr},
                  {"adam_beta1", c.trainer.adam_beta1},
                  {"adam_beta2", c.trainer.adam_beta2},
                  {"adam_eps", c.trainer.adam_eps},
                  {"batch", c.trainer.batch},
                  {"epochs", c.trainer.epochs},
                  {"eval_every", c.trainer.eval_every},
                  {"eval_samples", c.trainer.eval_samples},
                  {"two_stage_switch", c.trainer.two_stage_switch}};
  j["metrics"] = {{"sw_projections", c.metrics.sw_projections},
                  {"align_eval_t", c.metrics.align_eval_t},
                  {"eval_seed", c.metrics.eval_seed},
                  {"has_seed", c.metrics.has_seed}};
  j["sweep"] = {{"modes", c.sweep.modes}, {"seeds", c.sweep.seeds}};
  j["verify"] = {{"seed", c.verify.seed},
                 {"has_seed", c.verify.has_seed},
                 {"decomp_instances", c.verify.decomp_instances},
                 {"marginal_instances", c.verify.marginal_instances},
                 {"prop1_instances", c.verify.prop1_instances},
                 {"lognorm_instances", c.verify.lognorm_instances},
                 {"multilatent_instances", c.verify.multilatent_instances},
                 {"vb_pairs", c.verify.vb_pairs},
                 {"hybrid_instances", c.verify.hybrid_instances},
                 {"hybrid_points", c.verify.hybrid_points},
                 {"quad_draws", c.verify.quad_draws}};
  j["tvscaling"] = {{"mu0", c.tvscaling.mu0},     {"s0", c.tvscaling.s0},
                    {"T_time", c.tvscaling.T_time}, {"step_counts", c.tvscaling.step_counts},
                    {"samples", c.tvscaling.samples}, {"bins", c.tvscaling.bins},
                    {"seed", c.tvscaling.seed},    {"has_seed", c.tvscaling.has_seed}};
  j["bound"] = {{"kl_to_gauss", c.bound.kl_to_gauss},
                {"L", c.bound.L},
                {"d", c.bound.d},
                {"m", c.bound.m},
                {"h", c.bound.h},
                {"T_time", c.bound.T_time},
                {"eps_const", c.bound.eps_const}};
  return j.dump();
}

void require_seeds(const ExperimentConfig& cfg, const std::vector<std::string>& which) {
  for (const auto& w : which) {
    bool ok = true;
    if (w == "dataset") ok = cfg.dataset.has_seed;
    else if (w == "encoders") ok = cfg.encoder_x.has_seed;
    else if (w == "modality") ok = !cfg.modality.enabled || cfg.modality.has_seed;
    else if (w == "metrics") ok = cfg.metrics.has_seed;
    else if (w == "verify") ok = cfg.verify.has_seed;
    else if (w == "tvscaling") ok = cfg.tvscaling.has_seed;
    else if (w == "sweep") ok = !cfg.sweep.seeds.empty();
    if (!ok)
      throw ConfigError("config must state the '" + w + "' seed explicitly for this command");
  }
}

ToyDataset resolve_dataset(const ExperimentConfig& cfg) {
  return ToyDataset::ring_mixture(cfg.dataset.components, cfg.dataset.points,
                                  cfg.dataset.radius, cfg.dataset.sigma, cfg.dataset.seed);
}

TrainSetup resolve_setup(const ExperimentConfig& cfg, TrainMode mode, const ToyDataset& data) {
  TrainSetup s;
  s.ns = make_noise_schedule(noise_kind_from_string(cfg.noise.kind), cfg.noise.T,
                             cfg.noise.beta_min, cfg.noise.beta_max);
  s.hybrid_weights =
      cfg.weights.kind == "rcg" ? rcg_weights(cfg.noise.T) : uniform_weights(cfg.noise.T);

  const int auto_warmup = std::max(1, cfg.trainer.epochs / 10);
  auto to_curriculum = [&](const ExperimentConfig::CurriculumCfg& cc) {
    Curriculum cur;
    cur.kind = curriculum_kind_from_string(cc.kind);
    cur.warmup = cc.warmup < 0 ? auto_warmup : cc.warmup;
    cur.peak = cc.peak;
    cur.floor = cc.floor;
    cur.horizon = cfg.trainer.epochs;
    return cur;
  };
  s.alpha_c = to_curriculum(cfg.alpha_curriculum);
  s.beta_c = to_curriculum(cfg.beta_curriculum);
  s.two_stage_switch =
      cfg.trainer.two_stage_switch < 0 ? s.alpha_c.warmup : cfg.trainer.two_stage_switch;

  // encoder for the primary representation
  if (cfg.encoder_x.kind == "class-prototype")
    s.enc_x = Encoder::class_prototype(data.centers(), cfg.encoder_x.out_dim,
                                       cfg.encoder_x.seed);
  else
    s.enc_x = Encoder::random_feature(2, cfg.encoder_x.hidden, cfg.encoder_x.out_dim,
                                      cfg.encoder_x.seed);

  const bool modality_on = cfg.modality.enabled && cfg.loss.lambda_y > 0.0;
  if (modality_on)
    s.modality = SyntheticModality::make(2, cfg.modality.y_dim, cfg.modality.noise_std,
                                         cfg.modality.seed, cfg.modality.enc_hidden,
                                         cfg.modality.enc_out_dim);
  s.modality_pair_seed = cfg.modality.seed;

  // model: per-mode loss wiring
  ModelConfig m;
  m.den.x_dim = 2;
  m.den.depth = cfg.denoiser.depth;
  m.den.width = cfg.denoiser.width;
  m.den.time_embed = cfg.denoiser.time_embed;
  m.den.inject_layer = cfg.denoiser.inject_layer;
  m.loss.align_layer_x = cfg.loss.align_layer_x;
  m.loss.align_layer_y = cfg.loss.align_layer_y;
  m.loss.lognorm_weight = cfg.loss.lognorm_weight;
  m.loss.stopgrad_conditional = cfg.loss.stopgrad_conditional;

  switch (mode) {
    case TrainMode::vanilla:
      m.loss.mode = LossMode::vanilla;
      break;
    case TrainMode::repa:
      m.loss.mode = LossMode::repa;
      m.loss.lambda_x = cfg.loss.lambda_x;  // single-latent special case
      break;
    case TrainMode::reed:
    case TrainMode::two_stage:
      m.loss.mode = LossMode::reed;
      m.loss.lambda_x = cfg.loss.lambda_x;
      m.loss.lambda_y = modality_on ? cfg.loss.lambda_y : 0.0;
      break;
    case TrainMode::rcg:
      m.loss.mode = LossMode::rcg;
      m.den.latent_dim = cfg.encoder_x.out_dim;
      break;
    case TrainMode::exact_elbo:
      m.loss.mode = LossMode::exact_elbo;
      m.loss.lambda_x = cfg.loss.lambda_x;
      m.den.latent_dim = cfg.encoder_x.out_dim;
      if (m.loss.align_layer_x >= m.den.inject_layer)
        m.loss.align_layer_x = m.den.inject_layer - 1;
      if (m.loss.align_layer_x < 1)
        throw ConfigError("exact-elbo needs inject_layer >= 2 so alignment can sit below it");
      break;
  }
  m.head_x = {m.den.width, 64, cfg.encoder_x.out_dim};
  m.head_y = {m.den.width, 64, cfg.modality.enc_out_dim};
  s.model = m;

  s.adam = {cfg.trainer.lr, cfg.trainer.adam_beta1, cfg.trainer.adam_beta2,
            cfg.trainer.adam_eps};
  s.epochs = cfg.trainer.epochs;
  s.batch = static_cast<std::size_t>(cfg.trainer.batch);
  s.eval_every = cfg.trainer.eval_every;
  s.eval_samples = static_cast<std::size_t>(cfg.trainer.eval_samples);
  s.sw_projections = cfg.metrics.sw_projections;
  s.eval_seed = cfg.metrics.eval_seed;
  s.align_eval_t = cfg.metrics.align_eval_t;
  return s;
}

TvScalingConfig resolve_tvscaling(const ExperimentConfig& cfg) {
  TvScalingConfig t;
  t.mu0 = cfg.tvscaling.mu0;
  t.s0 = cfg.tvscaling.s0;
  t.T_time = cfg.tvscaling.T_time;
  t.step_counts = cfg.tvscaling.step_counts;
  t.n_samples = static_cast<std::size_t>(cfg.tvscaling.samples);
  t.bins = cfg.tvscaling.bins;
  t.seed = cfg.tvscaling.seed;
  return t;
}

TvBoundInputs resolve_bound(const ExperimentConfig& cfg) {
  TvBoundInputs in;
  in.kl_to_gauss = cfg.bound.kl_to_gauss;
  in.L = cfg.bound.L;
  in.d = cfg.bound.d;
  in.m = cfg.bound.m;
  in.h = cfg.bound.h;
  in.T_time = cfg.bound.T_time;
  const std::size_t N = static_cast<std::size_t>(std::llround(cfg.bound.T_time / cfg.bound.h));
  in.eps.assign(N, cfg.bound.eps_const);
  return in;
}

}  // namespace repdiff
