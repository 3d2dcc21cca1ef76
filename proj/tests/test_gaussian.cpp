#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "repdiff/gaussian.hpp"
#include "repdiff/rng.hpp"
#include "repdiff/schedules.hpp"

using namespace repdiff;

TEST_CASE("forward posterior at t=1 collapses onto x0") {
  const auto ns = make_noise_schedule(NoiseKind::linear, 3, 0.1, 0.3);
  const std::vector<double> x0{0.4, -1.2}, xt{2.0, 0.5};
  const auto k = forward_posterior(ns, 1, x0, xt);
  CHECK(k.variance == 0.0);
  CHECK(k.mean[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(k.mean[1] == doctest::Approx(-1.2).epsilon(1e-12));
  CHECK_THROWS(forward_posterior(ns, 0, x0, xt));
  CHECK_THROWS(forward_posterior(ns, 4, x0, xt));
}

TEST_CASE("vanishing beta_t pulls the posterior onto x_t") {
  NoiseSchedule ns = make_noise_schedule(NoiseKind::linear, 2, 0.3, 0.3);
  ns.beta[1] = 1e-12;
  ns.alpha_bar[1] = ns.alpha_bar[0] * (1.0 - ns.beta[1]);
  const std::vector<double> x0{1.0}, xt{-2.0};
  const auto k = forward_posterior(ns, 2, x0, xt);
  CHECK(std::abs(k.mean[0] - (-2.0)) < 1e-10);
  CHECK(k.variance < 1e-11);
}

TEST_CASE("forward posterior matches the conjugate-Gaussian oracle") {
  const auto ns = make_noise_schedule(NoiseKind::linear, 3, 0.05, 0.25);
  Rng rng(404);
  for (int rep = 0; rep < 20; ++rep) {
    const int t = 2 + static_cast<int>(rng.uniform_index(2));  // t in {2,3}
    std::vector<double> x0(3), xt(3);
    for (int i = 0; i < 3; ++i) {
      x0[i] = rng.normal();
      xt[i] = rng.normal();
    }
    const auto k = forward_posterior(ns, t, x0, xt);
    const auto oracle = oracles::conjugate_gaussian_posterior(
        ns.abar(t - 1), 1.0 - ns.beta[t - 1], ns.beta[t - 1], x0, xt);
    CHECK(std::abs(k.variance - oracle.variance) < 1e-12);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(k.mean[i] - oracle.mean[i]) < 1e-12);
  }
}

TEST_CASE("log-normalizer closed form") {
  const std::vector<double> zero2{0.0, 0.0};
  CHECK(neg_log_z_gaussian(0.0, 1.0, {3.0, 1.0}, zero2) == 0.0);
  CHECK(neg_log_z_gaussian(1.0, 1.0, {3.0, 1.0}, zero2) == 0.0);
  CHECK(neg_log_z_gaussian(0.5, 1.0, {1.0, 0.0}, zero2) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK_THROWS(neg_log_z_gaussian(1.5, 1.0, zero2, zero2));
  CHECK_THROWS(neg_log_z_gaussian(0.5, 0.0, zero2, zero2));
}

TEST_CASE("log-normalizer matches adaptive quadrature, 200 draws") {
  Rng rng(777);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const double A = rng.uniform();
    const double sigma2 = 0.2 + 2.0 * rng.uniform();
    std::vector<double> mu_c(2), mu_u(2);
    for (int i = 0; i < 2; ++i) {
      mu_c[i] = 2.0 * rng.normal();
      mu_u[i] = 2.0 * rng.normal();
    }
    const double closed = neg_log_z_gaussian(A, sigma2, mu_c, mu_u);
    const double quad = -oracles::hybrid_normalizer_quadrature(A, sigma2, mu_c, mu_u);
    worst = std::max(worst, std::abs(closed - quad));
    // upper bound via equal-variance Gaussian KLs
    double d2 = 0;
    for (int i = 0; i < 2; ++i) d2 += (mu_c[i] - mu_u[i]) * (mu_c[i] - mu_u[i]);
    CHECK(closed <= std::min(A, 1.0 - A) * d2 / (2.0 * sigma2) + 1e-12);
    CHECK(closed >= 0.0);
  }
  CHECK(worst < 1e-7);
  MESSAGE("worst |closed - quadrature|: ", worst);
}

TEST_CASE("hybrid of equal-variance Gaussians") {
  GaussianKernel kc{{2.0, 0.0}, 0.5}, ku{{0.0, 0.0}, 0.5};
  const auto h1 = hybrid_gaussian(1.0, kc, ku);
  CHECK(h1.mean == kc.mean);
  const auto h = hybrid_gaussian(0.5, kc, ku);
  CHECK(h.mean[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(h.mean[1] == 0.0);
  CHECK(h.variance == 0.5);
  GaussianKernel bad{{0.0, 0.0}, 0.7};
  CHECK_THROWS(hybrid_gaussian(0.5, kc, bad));
}

TEST_CASE("hybrid density equals the renormalized weighted product on a grid") {
  Rng rng(808);
  const double A = 0.3, sigma2 = 0.8;
  GaussianKernel kc{{rng.normal(), rng.normal()}, sigma2};
  GaussianKernel ku{{rng.normal(), rng.normal()}, sigma2};
  const auto hyb = hybrid_gaussian(A, kc, ku);
  const double nlz = neg_log_z_gaussian(A, sigma2, kc.mean, ku.mean);

  auto log_iso = [&](const std::vector<double>& x, const GaussianKernel& k) {
    double q = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      q += (x[i] - k.mean[i]) * (x[i] - k.mean[i]);
    return -q / (2.0 * k.variance) - std::log(2.0 * M_PI * k.variance);
  };

  double worst = 0.0;
  for (double gx = -3.0; gx <= 3.0; gx += 0.5)
    for (double gy = -3.0; gy <= 3.0; gy += 0.5) {
      const std::vector<double> x{gx, gy};
      const double lhs = log_iso(x, hyb);
      const double rhs = A * log_iso(x, kc) + (1.0 - A) * log_iso(x, ku) + nlz;
      worst = std::max(worst, std::abs(std::exp(lhs) - std::exp(rhs)));
    }
  CHECK(worst < 1e-10);
}

TEST_CASE("hybrid score identity: degenerate weights") {
  const auto inst = LinearGaussianInstance::random(12);
  for (double A : {0.0, 1.0}) {
    const auto rep = verify_hybrid_score(inst, A, 50, 99);
    CHECK(rep.max_closed_form_err < 1e-10);
  }
}

TEST_CASE("hybrid score identity: random instances") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = LinearGaussianInstance::random(seed);
    const auto rep = verify_hybrid_score(inst, 0.3, 100, seed + 5);
    CHECK(rep.max_closed_form_err < 1e-8);
    CHECK(rep.max_fd_err < 1e-5);
  }
}

TEST_CASE("hybrid score rejects non-Gaussian inputs") {
  auto inst = LinearGaussianInstance::random(3);
  inst.S0 = {1.0, 2.0, 2.0, 1.0};  // indefinite
  CHECK_THROWS(verify_hybrid_score(inst, 0.5, 10, 1));
  auto inst2 = LinearGaussianInstance::random(4);
  inst2.c = 0.0;
  CHECK_THROWS(verify_hybrid_score(inst2, 0.5, 10, 1));
}

TEST_CASE("vMF KL basics") {
  VmfPair same{{1, 0, 0}, {1, 0, 0}, 2.0, 3};
  CHECK(vmf_kl(same) == 0.0);
  VmfPair flat{{1, 0, 0}, {0, 1, 0}, 0.0, 3};
  CHECK(vmf_kl(flat) == 0.0);
  VmfPair neg{{1, 0, 0}, {0, 1, 0}, -1.0, 3};
  CHECK_THROWS(vmf_kl(neg));
  VmfPair unnorm{{2, 0, 0}, {0, 1, 0}, 1.0, 3};
  CHECK_THROWS(vmf_kl(unnorm));
}

TEST_CASE("p=3 closed form: coth(k) - 1/k") {
  for (double k : {0.05, 0.5, 2.0, 10.0, 100.0, 500.0}) {
    const double closed = 1.0 / std::tanh(k) - 1.0 / k;
    CHECK(std::abs(vmf_mean_resultant(3, k) - closed) < 1e-12);
  }
  VmfPair orth{{1, 0, 0}, {0, 1, 0}, 2.0, 3};
  const double expect = 2.0 * (1.0 / std::tanh(2.0) - 0.5);
  CHECK(vmf_kl(orth) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(vmf_kl(orth) == doctest::Approx(1.07463).epsilon(1e-5));
}

TEST_CASE("Bessel ratio matches spherical quadrature") {
  for (int p : {2, 3, 8}) {
    for (double k : {0.1, 1.0, 10.0, 100.0}) {
      const double cf = vmf_mean_resultant(p, k);
      const double quad = oracles::vmf_mean_resultant_quadrature(p, k);
      INFO("p=", p, " kappa=", k);
      CHECK(std::abs(cf - quad) < 1e-6);
    }
  }
}

TEST_CASE("vMF KL properties: sign, zeros, monotone in alignment") {
  Rng rng(31337);
  for (int rep = 0; rep < 20; ++rep) {
    const double k = 0.1 + 20.0 * rng.uniform();
    double prev = -1.0;
    for (double dot : {-0.9, -0.3, 0.2, 0.8, 0.999}) {
      // build unit vectors in the plane with the requested inner product
      VmfPair pair{{1, 0, 0, 0}, {dot, std::sqrt(1 - dot * dot), 0, 0}, k, 4};
      const double kl = vmf_kl(pair);
      CHECK(kl >= 0.0);
      if (prev >= 0.0) CHECK(kl < prev);  // strictly decreasing in the dot product
      prev = kl;
    }
  }
  // tiny kappa falls back to the series branch and stays continuous
  CHECK(vmf_mean_resultant(5, 1e-4) == doctest::Approx(1e-4 / 5.0).epsilon(1e-6));
  CHECK(vmf_mean_resultant(5, 0.0) == 0.0);
}

TEST_CASE("TV bound terms: arithmetic plug-in") {
  TvBoundInputs in;
  in.kl_to_gauss = 1.0;
  in.L = 1.0;
  in.d = 1;
  in.m = 1.0;
  in.h = 0.1;
  in.T_time = 10.0;
  in.eps.assign(100, 0.0);
  const auto t = tv_bound_terms(in);
  CHECK(t.convergence == doctest::Approx(std::exp(-10.0)).epsilon(1e-12));
  CHECK(t.convergence == doctest::Approx(4.54e-5).epsilon(1e-2));
  CHECK(t.discretization ==
        doctest::Approx((std::sqrt(0.1) + 0.1) * std::sqrt(10.0)).epsilon(1e-12));
  CHECK(t.score == 0.0);
}

TEST_CASE("TV bound terms: constant score error sums to c*N*sqrt(h)") {
  TvBoundInputs in;
  in.kl_to_gauss = 0.5;
  in.L = 2.0;
  in.d = 2;
  in.m = 1.5;
  in.h = 0.25;
  in.T_time = 5.0;
  in.eps.assign(20, 0.3);
  const auto t = tv_bound_terms(in);
  CHECK(t.score == doctest::Approx(0.3 * 20 * std::sqrt(0.25)).epsilon(1e-12));
}

TEST_CASE("TV bound terms: step size assumption is enforced by name") {
  TvBoundInputs in;
  in.kl_to_gauss = 1.0;
  in.L = 4.0;
  in.d = 1;
  in.m = 1.0;
  in.h = 0.5;  // 1/L = 0.25 < h
  in.T_time = 2.0;
  in.eps.assign(4, 0.0);
  CHECK_THROWS_WITH_AS(tv_bound_terms(in), doctest::Contains("1/L"), std::invalid_argument);
}

TEST_CASE("TV bound terms: monotonicity in h, T and eps") {
  auto make = [](double h, double T, double e) {
    TvBoundInputs in;
    in.kl_to_gauss = 1.0;
    in.L = 1.0;
    in.d = 2;
    in.m = 1.0;
    in.h = h;
    in.T_time = T;
    in.eps.assign(static_cast<std::size_t>(std::llround(T / h)), e);
    return tv_bound_terms(in);
  };
  // halving h shrinks discretization by a factor in [sqrt(2), 2]
  const double r = make(0.2, 8.0, 0.0).discretization / make(0.1, 8.0, 0.0).discretization;
  CHECK(r >= std::sqrt(2.0) - 1e-12);
  CHECK(r <= 2.0 + 1e-12);
  // larger T shrinks the convergence term as exp(-T)
  CHECK(make(0.1, 12.0, 0.0).convergence < make(0.1, 8.0, 0.0).convergence);
  CHECK(make(0.1, 12.0, 0.0).convergence / make(0.1, 8.0, 0.0).convergence ==
        doctest::Approx(std::exp(-4.0)).epsilon(1e-9));
  // larger per-step error grows the score term
  CHECK(make(0.1, 8.0, 0.2).score > make(0.1, 8.0, 0.1).score);
}
