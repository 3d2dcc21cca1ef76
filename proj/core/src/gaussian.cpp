#include "repdiff/gaussian.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "repdiff/rng.hpp"

namespace repdiff {

namespace {

void check_unit(const std::vector<double>& v, const char* name) {
  double s = 0.0;
  for (double x : v) s += x * x;
  if (std::abs(std::sqrt(s) - 1.0) > 1e-10)
    throw std::invalid_argument(std::string(name) + ": not unit norm");
}

// I_nu / I_{nu-1} via the modified Lentz continued fraction
// r_nu(x) = x / (2 nu + x^2 / (2 (nu+1) + x^2 / (...))).
double bessel_ratio_cf(double nu, double x) {
  const double tiny = 1e-300;
  double f = tiny, C = f, D = 0.0;
  for (int k = 1; k < 100000; ++k) {
    const double a = k == 1 ? x : x * x;
    const double b = 2.0 * (nu + k - 1);
    D = b + a * D;
    if (D == 0.0) D = tiny;
    C = b + a / C;
    if (C == 0.0) C = tiny;
    D = 1.0 / D;
    const double delta = C * D;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-15) return f;
  }
  throw std::runtime_error("bessel_ratio_cf: continued fraction did not converge");
}

// low-order series of the same ratio, for x near zero where the fraction
// loses relative accuracy
double bessel_ratio_series(double nu, double x) {
  const double u = 0.25 * x * x;
  const double num = 1.0 + u / (nu + 1.0) + u * u / (2.0 * (nu + 1.0) * (nu + 2.0));
  const double den = 1.0 + u / nu + u * u / (2.0 * nu * (nu + 1.0));
  return x / (2.0 * nu) * num / den;
}

using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;

Mat2 to_mat(const std::array<double, 4>& a) {
  Mat2 m;
  m << a[0], a[1], a[2], a[3];
  return m;
}

Vec2 to_vec(const std::array<double, 2>& a) { return Vec2(a[0], a[1]); }

void check_spd(const Mat2& m, const char* name) {
  if (std::abs(m(0, 1) - m(1, 0)) > 1e-12 || m(0, 0) <= 0.0 || m.determinant() <= 0.0)
    throw std::invalid_argument(std::string(name) + ": not symmetric positive definite");
}

double log_gauss2(const Vec2& x, const Vec2& mu, const Mat2& cov) {
  const Mat2 prec = cov.inverse();
  const Vec2 d = x - mu;
  return -0.5 * d.dot(prec * d) - 0.5 * std::log(cov.determinant()) - std::log(2.0 * M_PI);
}

}  // namespace

GaussianKernel forward_posterior(const NoiseSchedule& ns, int t, const std::vector<double>& x0,
                                 const std::vector<double>& xt) {
  if (t < 1 || t > ns.T)
    throw std::invalid_argument("forward_posterior: t = " + std::to_string(t) +
                                " outside [1, " + std::to_string(ns.T) + "]");
  if (x0.size() != xt.size())
    throw std::invalid_argument("forward_posterior: x0/xt dimension mismatch");
  const double beta = ns.beta[t - 1];
  const double abar = ns.alpha_bar[t - 1];
  const double abar_prev = ns.abar(t - 1);
  const double alpha = 1.0 - beta;
  const double denom = 1.0 - abar;
  const double c0 = std::sqrt(abar_prev) * beta / denom;
  const double ct = std::sqrt(alpha) * (1.0 - abar_prev) / denom;
  GaussianKernel k;
  k.mean.resize(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) k.mean[i] = c0 * x0[i] + ct * xt[i];
  k.variance = beta * (1.0 - abar_prev) / denom;
  return k;
}

double neg_log_z_gaussian(double A, double sigma2, const std::vector<double>& mu_c,
                          const std::vector<double>& mu_u) {
  if (A < 0.0 || A > 1.0) throw std::invalid_argument("neg_log_z_gaussian: A outside [0,1]");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("neg_log_z_gaussian: sigma2 must be > 0");
  if (mu_c.size() != mu_u.size())
    throw std::invalid_argument("neg_log_z_gaussian: mean dimension mismatch");
  double d2 = 0.0;
  for (std::size_t i = 0; i < mu_c.size(); ++i) {
    const double d = mu_c[i] - mu_u[i];
    d2 += d * d;
  }
  return A * (1.0 - A) * d2 / (2.0 * sigma2);
}

GaussianKernel hybrid_gaussian(double A, const GaussianKernel& k_c, const GaussianKernel& k_u) {
  if (k_c.mean.size() != k_u.mean.size())
    throw std::invalid_argument("hybrid_gaussian: mean dimension mismatch");
  if (std::abs(k_c.variance - k_u.variance) > 1e-12)
    throw std::invalid_argument("hybrid_gaussian: variances differ (" +
                                std::to_string(k_c.variance) + " vs " +
                                std::to_string(k_u.variance) + ")");
  GaussianKernel out;
  out.variance = k_c.variance;
  out.mean.resize(k_c.mean.size());
  for (std::size_t i = 0; i < out.mean.size(); ++i)
    out.mean[i] = A * k_c.mean[i] + (1.0 - A) * k_u.mean[i];
  return out;
}

double vmf_mean_resultant(int p, double kappa) {
  if (p < 2) throw std::invalid_argument("vmf_mean_resultant: dimension must be >= 2");
  if (kappa < 0.0) throw std::invalid_argument("vmf_mean_resultant: kappa must be >= 0");
  if (kappa == 0.0) return 0.0;
  const double nu = 0.5 * p;
  if (kappa < 1e-3) return bessel_ratio_series(nu, kappa);
  return bessel_ratio_cf(nu, kappa);
}

double vmf_kl(const VmfPair& pair) {
  if (pair.p < 2) throw std::invalid_argument("vmf_kl: dimension must be >= 2");
  if (pair.kappa < 0.0) throw std::invalid_argument("vmf_kl: kappa must be >= 0");
  if (static_cast<int>(pair.mu_z.size()) != pair.p ||
      static_cast<int>(pair.mu_hat.size()) != pair.p)
    throw std::invalid_argument("vmf_kl: direction dimension mismatch");
  check_unit(pair.mu_z, "vmf_kl: mu_z");
  check_unit(pair.mu_hat, "vmf_kl: mu_hat");
  double dot = 0.0;
  for (int i = 0; i < pair.p; ++i) dot += pair.mu_z[i] * pair.mu_hat[i];
  return pair.kappa * vmf_mean_resultant(pair.p, pair.kappa) * (1.0 - dot);
}

TvBoundTerms tv_bound_terms(const TvBoundInputs& in) {
  if (in.kl_to_gauss < 0.0 || in.L < 0.0 || in.d < 1 || in.m < 0.0 || !(in.h > 0.0) ||
      !(in.T_time > 0.0))
    throw std::invalid_argument("tv_bound_terms: inputs must be nonnegative, h and T positive");
  if (in.L > 0.0 && in.h > 1.0 / in.L)
    throw std::invalid_argument(
        "tv_bound_terms: step size violates h <= 1/L (h = " + std::to_string(in.h) +
        ", 1/L = " + std::to_string(1.0 / in.L) + ")");
  const std::size_t N = static_cast<std::size_t>(std::llround(in.T_time / in.h));
  if (in.eps.size() != N)
    throw std::invalid_argument("tv_bound_terms: need N = T/h = " + std::to_string(N) +
                                " score errors, got " + std::to_string(in.eps.size()));
  TvBoundTerms out;
  out.convergence = std::sqrt(in.kl_to_gauss) * std::exp(-in.T_time);
  out.discretization =
      (in.L * std::sqrt(in.d * in.h) + in.L * in.m * in.h) * std::sqrt(in.T_time);
  double s = 0.0;
  for (double e : in.eps) {
    if (e < 0.0) throw std::invalid_argument("tv_bound_terms: negative score error");
    s += e;
  }
  out.score = s * std::sqrt(in.h);
  return out;
}

LinearGaussianInstance LinearGaussianInstance::random(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x6a55));
  auto rand_spd = [&rng](double ridge) {
    Mat2 M;
    M << rng.normal(), rng.normal(), rng.normal(), rng.normal();
    Mat2 S = M * M.transpose() + ridge * Mat2::Identity();
    return S;
  };
  LinearGaussianInstance inst;
  inst.m0 = {rng.normal(), rng.normal()};
  const Mat2 S0 = rand_spd(0.5);
  inst.S0 = {S0(0, 0), S0(0, 1), S0(1, 0), S0(1, 1)};
  inst.a = 0.5 + rng.uniform();          // in [0.5, 1.5]
  inst.c = 0.3 + 0.7 * rng.uniform();    // in [0.3, 1.0]
  Mat2 H;
  H << 1.0 + 0.5 * rng.normal(), 0.5 * rng.normal(), 0.5 * rng.normal(),
      1.0 + 0.5 * rng.normal();
  inst.H = {H(0, 0), H(0, 1), H(1, 0), H(1, 1)};
  const Mat2 R = rand_spd(0.4);
  inst.R = {R(0, 0), R(0, 1), R(1, 0), R(1, 1)};
  return inst;
}

HybridScoreReport verify_hybrid_score(const LinearGaussianInstance& inst, double A, int npoints,
                                      std::uint64_t seed) {
  if (A < 0.0 || A > 1.0) throw std::invalid_argument("verify_hybrid_score: A outside [0,1]");
  if (!(inst.c > 0.0)) throw std::invalid_argument("verify_hybrid_score: c must be > 0");
  const Vec2 m0 = to_vec(inst.m0);
  const Mat2 S0 = to_mat(inst.S0);
  const Mat2 H = to_mat(inst.H);
  const Mat2 R = to_mat(inst.R);
  check_spd(S0, "verify_hybrid_score: S0");
  check_spd(R, "verify_hybrid_score: R");
  const double a = inst.a, c = inst.c;

  // conditionals of the joint Gaussian over (x, x1, z)
  const Mat2 Szz = H * S0 * H.transpose() + R;           // cov(z)
  const Mat2 Kz = S0 * H.transpose() * Szz.inverse();    // gain for z
  const Mat2 Sc = S0 - Kz * H * S0;                      // cov(x | z)

  const Mat2 Sx1 = a * a * S0 + c * Mat2::Identity();    // cov(x1)
  const Mat2 K1 = a * S0 * Sx1.inverse();                // gain for x1
  const Mat2 Su1 = S0 - a * K1 * S0;                     // cov(x | x1)

  // joint observation w = (x1, z)
  Eigen::Matrix<double, 2, 4> Cxw;
  Cxw.block<2, 2>(0, 0) = a * S0;
  Cxw.block<2, 2>(0, 2) = S0 * H.transpose();
  Eigen::Matrix4d Sw;
  Sw.block<2, 2>(0, 0) = Sx1;
  Sw.block<2, 2>(0, 2) = a * S0 * H.transpose();
  Sw.block<2, 2>(2, 0) = a * H * S0;
  Sw.block<2, 2>(2, 2) = Szz;
  const Eigen::Matrix<double, 2, 4> K2 = Cxw * Sw.inverse();
  const Mat2 Sc1 = S0 - K2 * Cxw.transpose();            // cov(x | x1, z)

  const Mat2 Lam0 = S0.inverse();
  const Mat2 LamC = Sc.inverse();
  const Mat2 LamC1 = Sc1.inverse();
  const Mat2 LamU1 = Su1.inverse();

  Rng rng(derive_seed(seed, 0x5c03e));
  HybridScoreReport rep;
  for (int n = 0; n < npoints; ++n) {
    const Vec2 x(m0(0) + 2.0 * rng.normal(), m0(1) + 2.0 * rng.normal());
    const Vec2 z(rng.normal() * 2.0, rng.normal() * 2.0);

    const Vec2 mu_c = m0 + Kz * (z - H * m0);
    const Vec2 score_c = -LamC * (x - mu_c);
    const Vec2 score_u = -Lam0 * (x - m0);
    const Vec2 rhs = A * score_c + (1.0 - A) * score_u;

    // reverse-kernel route, with two independent x1 draws; the result must
    // not depend on x1
    for (int rep_x1 = 0; rep_x1 < 2; ++rep_x1) {
      const Vec2 x1(rng.normal() * 2.0, rng.normal() * 2.0);
      Eigen::Vector4d w;
      w << x1(0) - a * m0(0), x1(1) - a * m0(1), z(0) - (H * m0)(0), z(1) - (H * m0)(1);
      const Vec2 mu_c1 = m0 + K2 * w;
      const Vec2 mu_u1 = m0 + K1 * (x1 - a * m0);
      const Vec2 rev_score = -(A * (LamC1 * (x - mu_c1)) + (1.0 - A) * (LamU1 * (x - mu_u1)));
      const Vec2 fwd_score = (a / c) * (x1 - a * x);
      const Vec2 lhs = rev_score - fwd_score;
      rep.max_closed_form_err = std::max(rep.max_closed_form_err, (lhs - rhs).lpNorm<Eigen::Infinity>());
    }

    // finite differences on A log p(x|z) + (1-A) log p(x): gradient of the
    // (unnormalized) hybrid marginal log density
    const double fd_h = 1e-6;
    Vec2 fd;
    for (int i = 0; i < 2; ++i) {
      Vec2 xp = x, xm = x;
      xp(i) += fd_h;
      xm(i) -= fd_h;
      const double fp = A * log_gauss2(xp, mu_c, Sc) + (1.0 - A) * log_gauss2(xp, m0, S0);
      const double fm = A * log_gauss2(xm, mu_c, Sc) + (1.0 - A) * log_gauss2(xm, m0, S0);
      fd(i) = (fp - fm) / (2.0 * fd_h);
    }
    rep.max_fd_err = std::max(rep.max_fd_err, (fd - rhs).lpNorm<Eigen::Infinity>());
  }
  return rep;
}

}  // namespace repdiff
