#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "repdiff/dataset.hpp"
#include "repdiff/trainer.hpp"
#include "repdiff/tvscaling.hpp"
#include "repdiff/gaussian.hpp"

namespace repdiff {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parsed experiment configuration. One static JSON document per invocation;
/// unknown keys are rejected, the schema version is mandatory, and every seed
/// a command consumes must be spelled out in the file.
struct ExperimentConfig {
  int schema_version = 1;

  struct Dataset {
    int components = 8;
    int points = 8192;
    double radius = 1.0;
    double sigma = 0.15;
    std::uint64_t seed = 0;
    bool has_seed = false;
  } dataset;

  struct Noise {
    std::string kind = "linear";
    int T = 100;
    double beta_min = 1e-4;
    double beta_max = 0.02;
  } noise;

  struct Weights {
    std::string kind = "uniform";  // uniform | rcg
  } weights;

  struct CurriculumCfg {
    std::string kind = "constant";
    int warmup = -1;  // < 0: resolve to 10% of epochs
    double peak = 1.0;
    double floor = 0.0;
  };
  CurriculumCfg alpha_curriculum{"linear-phase-in", -1, 1.0, 0.0};
  CurriculumCfg beta_curriculum{"constant", 0, 1.0, 0.0};

  struct EncoderX {
    std::string kind = "class-prototype";  // class-prototype | random-feature
    int out_dim = 8;
    int hidden = 32;
    std::uint64_t seed = 0;
    bool has_seed = false;
  } encoder_x;

  struct Modality {
    bool enabled = true;
    int y_dim = 3;
    double noise_std = 0.1;
    int enc_hidden = 32;
    int enc_out_dim = 4;
    std::uint64_t seed = 0;
    bool has_seed = false;
  } modality;

  struct Denoiser {
    int depth = 4;
    int width = 128;
    int time_embed = 8;
    int inject_layer = 2;
  } denoiser;

  struct Loss {
    double lambda_x = 1.0;
    double lambda_y = 0.5;
    double lognorm_weight = 1.0;
    bool stopgrad_conditional = false;
    int align_layer_x = 1;
    int align_layer_y = 3;
  } loss;

  struct Trainer {
    double lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch = 256;
    int epochs = 200;
    int eval_every = 0;
    int eval_samples = 4096;
    int two_stage_switch = -1;  // < 0: same length as the alpha warmup
  } trainer;

  struct Metrics {
    int sw_projections = 512;
    int align_eval_t = 10;
    std::uint64_t eval_seed = 0;
    bool has_seed = false;
  } metrics;

  struct Sweep {
    std::vector<std::string> modes;
    std::vector<std::uint64_t> seeds;
  } sweep;

  struct Verify {
    std::uint64_t seed = 0;
    bool has_seed = false;
    int decomp_instances = 1000;
    int marginal_instances = 500;
    int prop1_instances = 500;
    int lognorm_instances = 1000;
    int multilatent_instances = 500;
    int vb_pairs = 200;
    int hybrid_instances = 20;
    int hybrid_points = 100;
    int quad_draws = 200;
  } verify;

  struct TvScaling {
    double mu0 = 1.0;
    double s0 = 0.75;
    double T_time = 8.0;
    std::vector<int> step_counts = {16, 32, 64, 128, 256};
    int samples = 100000;
    int bins = 100;
    std::uint64_t seed = 0;
    bool has_seed = false;
  } tvscaling;

  struct Bound {
    double kl_to_gauss = 1.0;
    double L = 1.0;
    int d = 1;
    double m = 1.0;
    double h = 0.1;
    double T_time = 10.0;
    double eps_const = 0.0;
  } bound;

  std::string hash;  // FNV-1a over the canonical serialized form
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);
std::string canonical_config_json(const ExperimentConfig& cfg);

/// Requires the seed fields a command consumes; throws ConfigError otherwise.
void require_seeds(const ExperimentConfig& cfg, const std::vector<std::string>& which);

/// Assembles a ready-to-run training setup for one mode. The class-prototype
/// encoder uses the dataset's mixture centers as prototypes.
TrainSetup resolve_setup(const ExperimentConfig& cfg, TrainMode mode, const ToyDataset& data);

ToyDataset resolve_dataset(const ExperimentConfig& cfg);
TvScalingConfig resolve_tvscaling(const ExperimentConfig& cfg);
TvBoundInputs resolve_bound(const ExperimentConfig& cfg);

}  // namespace repdiff
