#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "repdiff/schedules.hpp"

namespace repdiff {

/// Finite-state data process: x_T - ... - x_1 - x_0 - (z_1..z_L).
/// forward[t-1] is an nx-by-nx stochastic matrix, row i giving
/// q(x_t = . | x_{t-1} = i). encoders[l] is nx-by-nz[l], row i giving
/// q(z_l = . | x_0 = i). Latents are conditionally independent given x_0.
struct DiscreteChainSpec {
  int T = 0;
  int nx = 0;
  std::vector<int> nz;
  std::vector<double> q0;
  std::vector<std::vector<double>> forward;
  std::vector<std::vector<double>> encoders;

  std::size_t num_latent_states() const;
  void validate() const;
  static DiscreteChainSpec random(int T, int nx, std::vector<int> nz, std::uint64_t seed);
};

/// Finite-state reverse model. reverse[t-1] row j gives p(x_{t-1} = . | x_t = j);
/// latent row i gives p(z = . | x_0 = i) over the joint latent space.
/// Construction floors every entry at 1e-12 and renormalizes so that all
/// logarithms stay finite.
struct DiscreteModel {
  int T = 0;
  int nx = 0;
  std::vector<int> nz;
  std::vector<double> prior;
  std::vector<std::vector<double>> reverse;
  std::vector<double> latent;  // nx rows of length num_latent_states()

  std::size_t num_latent_states() const;
  void apply_floor();
  void validate() const;
  static DiscreteModel random(int T, int nx, std::vector<int> nz, std::uint64_t seed);
  /// Exact Bayes inverse of a chain spec: same joint distribution.
  static DiscreteModel bayes_inverse(const DiscreteChainSpec& spec);
};

/// Full probability table over (x_0, ..., x_T, z). Entry layout:
/// ((x0 * nx + x1) * nx + ... + xT) * NZ + z, z row-major over latent levels.
struct DiscreteJoint {
  int T = 0;
  int nx = 0;
  std::vector<int> nz;
  std::size_t NZ = 1;
  std::vector<double> table;

  std::size_t size() const { return table.size(); }
  double total_mass() const;
  std::size_t index(const std::vector<int>& xs, std::size_t z) const;

  std::vector<double> marginal_x(int t) const;                   // nx
  std::vector<double> marginal_xz(int t) const;                  // nx*NZ
  std::vector<double> marginal_xx(int t) const;                  // (x_{t-1}, x_t), nx*nx
  std::vector<double> marginal_xxz(int t) const;                 // nx*nx*NZ
  std::vector<double> marginal_x0x(int t) const;                 // (x0, x_t), nx*nx
};

DiscreteJoint build_joint(const DiscreteChainSpec& spec);
DiscreteJoint build_joint(const DiscreteModel& model);

/// Conditionals derived from the model joint by exact Bayes.
struct ModelConditionals {
  // cond_c[t-1][(j*NZ + k)*nx + i] = p(x_{t-1}=i | x_t=j, z=k)
  std::vector<std::vector<double>> cond_c;
  // cond_u[t-1][j*nx + i] = p(x_{t-1}=i | x_t=j)
  std::vector<std::vector<double>> cond_u;
  // pz_x[t][j*NZ + k] = p(z=k | x_t=j), t = 0..T
  std::vector<std::vector<double>> pz_x;
  // marg_x[t][j] = p(x_t = j), t = 0..T
  std::vector<std::vector<double>> marg_x;
};
ModelConditionals derive_conditionals(const DiscreteModel& model);

/// Max over t = 0..T and all state tuples of |p^t(tuple) - joint(tuple)|,
/// where p^t reinserts the latent at step t using Bayes-derived conditionals.
/// `pz_shift` > 0 additively perturbs the derived p(z|x_t) tables (then
/// renormalizes) as a negative control.
double verify_decompositions(const DiscreteModel& model, double pz_shift = 0.0);

/// Max over decomposition pairs (s, s') and steps t of the discrepancy in the
/// x_t marginal computed under each decomposition.
double verify_marginal_invariance(const DiscreteModel& model);

/// Resample z from p(z|x_t) mid-trajectory and continue downward with the
/// conditional kernels; max discrepancy of the resulting x_0 marginal
/// against the model's own x_0 marginal, over all resample steps t.
double verify_resampling_invariance(const DiscreteModel& model);

/// Exact variational bound by full summation over the q-joint, with
/// q-posteriors derived from the spec by Bayes.
double vb_direct(const DiscreteChainSpec& spec, const DiscreteModel& model);

/// Exact negative log-likelihood -sum_x0 q0(x0) log p(x0) under the model.
double model_nll(const DiscreteChainSpec& spec, const DiscreteModel& model);

struct VbTerms {
  double denoise = 0.0;   // sum_t E[log q(x_{t-1}|x_t,x0) / hybrid]
  double lognorm = 0.0;   // sum_t E[-log Z_t] (>= 0)
  double repkl = 0.0;     // sum_t alpha_t E[KL(q(z|x0) || p(z|x_t))]
  double prior = 0.0;     // E[log q(x_T|x0) / p(x_T)]
  double sum() const { return denoise + lognorm + repkl + prior; }
};

/// Weighted decomposition of the variational bound; sum() equals vb_direct
/// up to 64-bit rounding. Hybrid kernels are computed in log space; Z_t by
/// exact summation over x_{t-1}.
VbTerms vb_prop1(const DiscreteChainSpec& spec, const DiscreteModel& model,
                 const WeightSchedule& w);

struct LognormBounds {
  double neg_log_z = 0.0;   // -sum_t E[log Z_t]
  double upper_uc = 0.0;    // sum_t E[A_t KL(p_u || p_c)]
  double upper_cu = 0.0;    // sum_t E[(1-A_t) KL(p_c || p_u)]
  bool holds(double tol = 1e-12) const {
    return neg_log_z >= -tol && neg_log_z <= std::min(upper_uc, upper_cu) + tol;
  }
};
LognormBounds verify_lognorm_bounds(const DiscreteChainSpec& spec, const DiscreteModel& model,
                                    const WeightSchedule& w);

/// Max over (t, x0, x_t) of |KL(q(z^L|x0) || p(z^L|x_t)) - sequential chain|.
/// Requires at least one latent; the chain is trivial for L = 1.
double verify_multilatent_kl(const DiscreteChainSpec& spec, const DiscreteModel& model);

}  // namespace repdiff
