#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "repdiff/dataset.hpp"
#include "repdiff/diffusion.hpp"
#include "repdiff/representation.hpp"
#include "repdiff/schedules.hpp"

namespace repdiff {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  long step = 0;
  Params m;  // first-moment accumulators, same shapes as the parameters
  Params v;  // second-moment accumulators

  static AdamState init(const AdamConfig& cfg, const Params& params);
};

/// Standard bias-corrected update. Throws on non-finite gradients, naming the
/// offending parameter.
void adam_step(AdamState& st, Params& params, const Params& grads);

enum class TrainMode { vanilla, repa, rcg, reed, exact_elbo, two_stage };
TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode m);

/// Everything a single training run needs, already resolved from config.
struct TrainSetup {
  NoiseSchedule ns;
  WeightSchedule hybrid_weights;  // per-step A_t, used by exact-elbo
  Curriculum alpha_c;             // diffusion-loss weight over epochs
  Curriculum beta_c;              // alignment-loss weight over epochs
  int two_stage_switch = 0;       // epoch of the hard switch in two_stage mode

  ModelConfig model;
  AdamConfig adam;
  int epochs = 200;
  std::size_t batch = 256;

  Encoder enc_x = Encoder::random_feature(2, 16, 8, 0);
  std::optional<SyntheticModality> modality;
  std::uint64_t modality_pair_seed = 0;  // per-sample synthetic-pair seeds derive from this

  // evaluation
  int eval_every = 0;  // 0: final epoch only
  std::size_t eval_samples = 4096;
  int sw_projections = 512;
  std::uint64_t eval_seed = 0;
  int align_eval_t = 10;
};

struct RunRecord {
  int epoch = 0;
  std::string mode;
  std::uint64_t seed = 0;
  double loss_total = 0.0;
  double loss_diffusion = 0.0;
  double loss_repgen = 0.0;
  double loss_lognorm = 0.0;
  double alpha_n = 1.0;
  double beta_n = 1.0;
  std::map<std::string, double> metrics;  // filled on evaluation epochs
  double wall_ms = 0.0;
};

struct TrainResult {
  DiffusionModel model;
  ZPrior z_prior;  // fitted on training latents in rcg mode
  std::vector<RunRecord> records;
  bool diverged = false;
  std::string divergence_info;
};

/// Deterministic per (mode, setup, seed). The two_stage mode trains
/// alignment-only until `two_stage_switch`, then plain diffusion.
TrainResult train(TrainMode mode, const ToyDataset& data, const TrainSetup& setup,
                  std::uint64_t seed);

/// Precomputed per-sample representations for a dataset (frozen encoders,
/// per-sample synthetic-pair seeds).
struct LatentCache {
  Tensor zx;  // [N, dx]
  Tensor zy;  // [N, dy]; empty when no modality
};
LatentCache build_latent_cache(const ToyDataset& data, const Encoder& enc_x,
                               const SyntheticModality* modality, std::uint64_t pair_seed);

/// Evaluation shared by train-time logging and the eval command: samples from
/// the model with the mode-appropriate sampler and reports metrics.
std::map<std::string, double> evaluate_model(const DiffusionModel& model, TrainMode mode,
                                             const ZPrior& prior, const ToyDataset& data,
                                             const TrainSetup& setup);

}  // namespace repdiff
