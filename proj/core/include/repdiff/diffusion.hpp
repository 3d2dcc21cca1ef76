#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "repdiff/autodiff.hpp"
#include "repdiff/schedules.hpp"
#include "repdiff/tensor.hpp"

namespace repdiff {

/// Named parameter store; std::map keeps iteration order deterministic,
/// which the flatten/unflatten pair and the optimizer rely on.
using Params = std::map<std::string, Tensor>;

Tensor flatten_params(const Params& p);
void unflatten_params(const Tensor& flat, Params& out);

/// Parameter expressions inside a graph: either one leaf per tensor (training)
/// or views into a single flat leaf (whole-model finite-difference checks).
struct ParamVars {
  std::map<std::string, Var> vars;
  const Var& at(const std::string& name) const;
};
ParamVars param_leaves(Graph& g, const Params& p);
ParamVars param_views(Graph& g, Var flat, const Params& shapes);

struct DenoiserConfig {
  int x_dim = 2;
  int depth = 4;
  int width = 128;
  int time_embed = 8;   // sinusoidal embedding size, even
  int num_classes = 0;  // > 0 enables a learnable class table
  int class_embed = 8;
  int latent_dim = 0;   // > 0 enables latent injection (conditioning on z)
  int inject_layer = 2; // 1-based hidden layer that receives the latent
};

struct AlignmentHeadConfig {
  int in_dim = 0;
  int hidden = 64;
  int out_dim = 0;
};

enum class LossMode { vanilla, repa, rcg, reed, exact_elbo };
LossMode loss_mode_from_string(const std::string& s);
std::string to_string(LossMode m);

struct LossConfig {
  LossMode mode = LossMode::vanilla;
  double lambda_x = 0.0;
  double lambda_y = 0.0;
  double lognorm_weight = 1.0;      // exact-elbo only
  bool stopgrad_conditional = false;
  int align_layer_x = 1;
  int align_layer_y = 3;
};

struct ModelConfig {
  DenoiserConfig den;
  AlignmentHeadConfig head_x;  // used when lambda_x > 0
  AlignmentHeadConfig head_y;  // used when lambda_y > 0
  LossConfig loss;
};

/// Closed-form forward sample x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
std::vector<double> forward_sample(const NoiseSchedule& ns, const std::vector<double>& x0,
                                   int t, const std::vector<double>& noise);
Tensor forward_sample_batch(const NoiseSchedule& ns, const Tensor& x0,
                            const std::vector<int>& t, const Tensor& noise);

/// Per-batch stochastic draws, derived from (seed, epoch, batch) tags only, so
/// loss modes consuming the same batch see identical noise.
struct DiffusionDraws {
  std::vector<int> t;
  Tensor noise;
};
DiffusionDraws draw_diffusion_batch(const NoiseSchedule& ns, std::size_t batch, int x_dim,
                                    std::uint64_t seed);

/// MLP noise predictor with exposed per-layer hidden states and optional
/// class-table / latent conditioning, plus projection heads. All weights live
/// in one flat `params` map under "den.", "headx.", "heady." prefixes.
class DiffusionModel {
 public:
  ModelConfig cfg;
  Params params;

  static DiffusionModel init(const ModelConfig& cfg, std::uint64_t seed);

  struct Trace {
    Var out;                  // [B, x_dim] predicted noise
    std::vector<Var> hidden;  // hidden[l-1] = layer-l activation, [B, width]
  };

  /// Builds the denoiser forward pass. `latent` must be non-null exactly when
  /// cfg.den.latent_dim > 0; pass the learnable dummy latent via
  /// `use_dummy_latent` for the unconditional branch.
  Trace forward(Graph& g, const ParamVars& pv, Var xt, const std::vector<int>& t,
                const std::vector<int>* labels, const Var* latent,
                bool use_dummy_latent = false) const;

  Tensor time_embedding(const std::vector<int>& t) const;

  /// Projection heads applied to a hidden state; rows come out unit-norm.
  Var project_head_x(Graph& g, const ParamVars& pv, Var h) const;
  Var project_head_y(Graph& g, const ParamVars& pv, Var h) const;

  struct Batch {
    Tensor x0;                // [B, x_dim]
    std::vector<int> labels;  // empty when unconditional
    DiffusionDraws draws;
    Tensor zx;                // [B, dx] unit rows; empty when unused
    Tensor zy;                // [B, dy] unit rows; empty when unused
  };

  struct LossExpr {
    Var total;
    Var diffusion;  // noise-prediction MSE (or hybrid-mean MSE for exact-elbo)
    Var repgen;     // negative weighted cosine alignment
    Var lognorm;    // weighted log-normalizer estimate (exact-elbo only)
  };

  /// Assembles the mode-specific training objective
  ///   total = alpha_n * diffusion + beta_n * repgen   (+ lognorm, exact-elbo)
  /// Weight schedule `A` is required for exact-elbo (per-step hybrid weights).
  LossExpr loss_expr(Graph& g, const ParamVars& pv, const NoiseSchedule& ns, const Batch& batch,
                     const WeightSchedule* A, double alpha_n, double beta_n) const;

  struct LossValues {
    double total = 0.0, diffusion = 0.0, repgen = 0.0, lognorm = 0.0;
  };
  /// Convenience evaluation without backward.
  LossValues eval_loss(const NoiseSchedule& ns, const Batch& batch, const WeightSchedule* A,
                       double alpha_n, double beta_n) const;
};

/// Ancestral sampler, posterior-mean parameterization from the noise
/// prediction; the final step adds no noise. `latents` conditions the model
/// per sample when the denoiser has a latent input; otherwise the learnable
/// dummy latent is fed. Deterministic given (params, seed, count).
Tensor ancestral_sample(const DiffusionModel& model, const NoiseSchedule& ns, std::size_t count,
                        const std::vector<int>* labels, const Tensor* latents,
                        std::uint64_t seed);

/// Gaussian mixture over encoder outputs, one component per class.
struct ZPrior {
  Tensor means;                 // [K, dz]
  std::vector<double> var;      // isotropic variance per component
  std::vector<double> weight;   // mixing weights
  bool fitted = false;
};
ZPrior fit_z_prior(const Tensor& latents, const std::vector<int>& labels, int num_classes);

/// Two-stage generation: draw z from the fitted prior (unit-normalized), then
/// run the conditional ancestral sampler.
Tensor rcg_sample(const DiffusionModel& model, const NoiseSchedule& ns, const ZPrior& prior,
                  std::size_t count, std::uint64_t seed);

}  // namespace repdiff
