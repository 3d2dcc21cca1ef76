#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "repdiff/schedules.hpp"

namespace repdiff {

/// Isotropic Gaussian with a shared scalar variance.
struct GaussianKernel {
  std::vector<double> mean;
  double variance = 0.0;
};

/// Exact forward posterior q(x_{t-1} | x_t, x_0) of the DDPM chain:
/// mean affine in (x_0, x_t), variance beta_t (1 - abar_{t-1}) / (1 - abar_t),
/// with the boundary convention abar_0 = 1 (so t = 1 collapses onto x_0).
GaussianKernel forward_posterior(const NoiseSchedule& ns, int t, const std::vector<double>& x0,
                                 const std::vector<double>& xt);

/// -log Z for the geometric interpolation of two equal-variance Gaussians:
/// A (1 - A) ||mu_c - mu_u||^2 / (2 sigma^2). Always >= 0.
double neg_log_z_gaussian(double A, double sigma2, const std::vector<double>& mu_c,
                          const std::vector<double>& mu_u);

/// Geometric interpolation p_c^A p_u^{1-A} of two equal-variance Gaussians,
/// renormalized: mean A mu_c + (1 - A) mu_u, variance unchanged.
GaussianKernel hybrid_gaussian(double A, const GaussianKernel& k_c, const GaussianKernel& k_u);

/// Mean resultant length A_p(kappa) = I_{p/2}(kappa) / I_{p/2-1}(kappa),
/// via a continued fraction; stable for kappa in [0, 500].
double vmf_mean_resultant(int p, double kappa);

struct VmfPair {
  std::vector<double> mu_z;   // reference mean direction, unit norm
  std::vector<double> mu_hat; // predicted mean direction, unit norm
  double kappa = 0.0;
  int p = 0;                  // ambient dimension >= 2
};

/// KL between two vMF distributions with shared concentration:
/// kappa A_p(kappa) (1 - mu_z . mu_hat).
double vmf_kl(const VmfPair& pair);

/// Inputs of the sampling-error bound: KL(q || standard Gaussian), score
/// Lipschitz constant L, dimension d, second-moment root m, step size h,
/// total diffusion time T, and per-step score errors (N = T/h values).
struct TvBoundInputs {
  double kl_to_gauss = 0.0;
  double L = 0.0;
  int d = 0;
  double m = 0.0;
  double h = 0.0;
  double T_time = 0.0;
  std::vector<double> eps;
};

struct TvBoundTerms {
  double convergence = 0.0;    // sqrt(KL) exp(-T)
  double discretization = 0.0; // (L sqrt(dh) + L m h) sqrt(T)
  double score = 0.0;          // sum_k eps_k sqrt(h)
};

/// Computes the three bound components. Only qualitative scaling is
/// meaningful; the hidden constants are not part of the statement.
/// Throws if h > 1/L (violates the step-size assumption).
TvBoundTerms tv_bound_terms(const TvBoundInputs& in);

/// Jointly Gaussian 2-D toy model: state x ~ N(m0, S0), observation
/// x1 | x ~ N(a x, c I), latent z | x ~ N(H x, R). All matrices row-major 2x2.
struct LinearGaussianInstance {
  std::array<double, 2> m0{};
  std::array<double, 4> S0{};
  double a = 1.0;
  double c = 1.0;
  std::array<double, 4> H{};
  std::array<double, 4> R{};

  static LinearGaussianInstance random(std::uint64_t seed);
};

struct HybridScoreReport {
  double max_closed_form_err = 0.0;  // reverse-kernel route vs interpolated scores
  double max_fd_err = 0.0;           // finite differences on log densities vs closed form
};

/// Checks that the score of the hybrid marginal equals
/// A * conditional score + (1 - A) * unconditional score at sampled points,
/// with every conditional derived in closed form from the joint Gaussian.
HybridScoreReport verify_hybrid_score(const LinearGaussianInstance& inst, double A, int npoints,
                                      std::uint64_t seed);

}  // namespace repdiff
