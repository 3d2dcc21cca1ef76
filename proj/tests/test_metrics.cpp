#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "oracles.hpp"
#include "repdiff/dataset.hpp"
#include "repdiff/metrics.hpp"
#include "repdiff/rng.hpp"
#include "repdiff/tvscaling.hpp"

using namespace repdiff;

TEST_CASE("sliced Wasserstein of a set with itself is zero") {
  Rng rng(1);
  Tensor a = Tensor::zeros(200, 2);
  for (auto& v : a.raw()) v = rng.normal();
  CHECK(sliced_wasserstein(a, a, 64, 9) == 0.0);
  // symmetric
  Tensor b = Tensor::zeros(200, 2);
  for (auto& v : b.raw()) v = rng.normal();
  CHECK(sliced_wasserstein(a, b, 64, 9) == doctest::Approx(sliced_wasserstein(b, a, 64, 9)));
  CHECK(sliced_wasserstein(a, b, 64, 9) > 0.0);
}

TEST_CASE("1-D translation is recovered exactly") {
  Rng rng(2);
  Tensor a = Tensor::zeros(500, 1);
  Tensor b = Tensor::zeros(500, 1);
  for (std::size_t i = 0; i < 500; ++i) {
    a[i] = rng.normal();
    b[i] = a[i] + 0.73;
  }
  // every projection of 1-D data is +-identity; distance is |shift|
  CHECK(sliced_wasserstein(a, b, 32, 5) == doctest::Approx(0.73).epsilon(1e-12));
}

TEST_CASE("two shifted 2-D Gaussians match the analytic projection formula") {
  Rng rng(3);
  const int n = 20000;
  Tensor a = Tensor::zeros(n, 2), b = Tensor::zeros(n, 2);
  for (int i = 0; i < n; ++i) {
    a.at(i, 0) = rng.normal();
    a.at(i, 1) = rng.normal();
    b.at(i, 0) = 1.0 + rng.normal();
    b.at(i, 1) = rng.normal();
  }
  // for equal-variance 1-D Gaussians W2 = |mean gap| = |cos angle|; averaging
  // over uniform directions gives |dmu| * 2 / pi
  const double expect = 2.0 / M_PI;
  const double got = sliced_wasserstein(a, b, 512, 11);
  CHECK(std::abs(got - expect) < 0.03);  // Monte-Carlo (projections + samples)
}

TEST_CASE("sliced Wasserstein input validation") {
  Tensor a = Tensor::zeros(4, 2), c = Tensor::zeros(4, 3);
  CHECK_THROWS(sliced_wasserstein(a, c, 8, 1));
  CHECK_THROWS(sliced_wasserstein(a, Tensor::zeros(0, 2), 8, 1));
  CHECK_THROWS(sliced_wasserstein(a, a, 0, 1));
}

TEST_CASE("histogram TV: consistency and disjoint supports") {
  Rng rng(4);
  std::vector<double> s(200000);
  for (auto& v : s) v = rng.normal();
  auto cdf = [](double x) { return oracles::phi(x); };
  const auto est = tv_histogram(s, cdf, 50, -5, 5);
  CHECK(est.tv < 3.0 * est.noise_bound);
  CHECK(est.noise_bound == doctest::Approx(std::sqrt(50.0 / 200000)));

  // disjoint: all samples far to the right of the reference mass
  std::vector<double> far(1000, 100.0);
  const auto dis = tv_histogram(far, cdf, 50, -5, 5);
  CHECK(dis.tv == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("histogram TV matches the analytic Gaussian value") {
  Rng rng(5);
  std::vector<double> s(100000);
  for (auto& v : s) v = rng.normal();  // N(0,1) samples
  auto ref = [](double x) { return oracles::phi(x - 3.0); };  // N(3,1) reference
  const auto est = tv_histogram(s, ref, 100, -6, 9);
  const double analytic = 2.0 * oracles::phi(1.5) - 1.0;  // ~0.8664
  CHECK(std::abs(est.tv - analytic) < 0.02);
}

TEST_CASE("reverse SDE with the exact score approaches the data law") {
  TvScalingConfig cfg;
  cfg.n_samples = 20000;
  cfg.seed = 17;
  cfg.step_counts = {16, 32, 64, 128};
  const auto rep = run_tv_scaling(cfg);
  REQUIRE(rep.rows.size() == 4);
  // coarse discretization is visibly off; fine is close
  CHECK(rep.rows.front().tv > rep.rows.back().tv);
  CHECK(rep.rows.back().tv < 0.1);
  CHECK(rep.tv_monotone_within_band);
  CHECK(rep.convergence_matches_exp_decay);
  CHECK_FALSE(rep.caveat.empty());
  for (const auto& r : rep.rows) {
    CHECK(r.term_score == 0.0);  // analytic score supplied
    CHECK(r.term_convergence == doctest::Approx(rep.rows[0].term_convergence));
  }
  // discretization term grows with h
  CHECK(rep.rows[0].term_discretization > rep.rows[3].term_discretization);
}

TEST_CASE("reverse SDE respects the step-size assumption") {
  TvScalingConfig cfg;
  cfg.s0 = 0.5;  // L = 4, so h must be <= 0.25
  cfg.T_time = 8.0;
  cfg.step_counts = {16};  // h = 0.5 violates the assumption
  cfg.n_samples = 100;
  CHECK_THROWS_WITH_AS(run_tv_scaling(cfg), doctest::Contains("1/L"), std::invalid_argument);
}
