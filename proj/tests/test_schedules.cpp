#include <doctest.h>

#include <cmath>

#include "repdiff/rng.hpp"
#include "repdiff/schedules.hpp"

using namespace repdiff;

TEST_CASE("linear noise schedule, T=2") {
  const auto ns = make_noise_schedule(NoiseKind::linear, 2, 0.1, 0.2);
  CHECK(ns.beta[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(ns.beta[1] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(ns.alpha_bar[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(ns.alpha_bar[1] == doctest::Approx(0.72).epsilon(1e-15));
  CHECK(ns.sigma[0] == 0.0);  // abar_0 = 1 convention
}

TEST_CASE("no-noise limit: alpha_bar -> 1") {
  const auto ns = make_noise_schedule(NoiseKind::linear, 50, 1e-13, 1e-13);
  for (double ab : ns.alpha_bar) CHECK(std::abs(ab - 1.0) < 1e-10);
}

TEST_CASE("cosine schedule T=1000 is strictly decreasing, exhaustively") {
  const auto ns = make_noise_schedule(NoiseKind::cosine, 1000, 1e-6, 0.999);
  REQUIRE(ns.alpha_bar.size() == 1000);
  for (int t = 1; t < 1000; ++t) {
    CHECK(ns.alpha_bar[t] < ns.alpha_bar[t - 1]);
    CHECK(ns.alpha_bar[t] > 0.0);
    CHECK(ns.alpha_bar[t] < 1.0);
    CHECK(ns.beta[t] > 0.0);
    CHECK(ns.beta[t] < 1.0);
  }
}

TEST_CASE("noise schedule parameter validation") {
  CHECK_THROWS(make_noise_schedule(NoiseKind::linear, 0, 0.1, 0.2));
  CHECK_THROWS(make_noise_schedule(NoiseKind::linear, 5, 0.0, 0.2));
  CHECK_THROWS(make_noise_schedule(NoiseKind::linear, 5, 0.3, 0.2));
  CHECK_THROWS(make_noise_schedule(NoiseKind::linear, 5, 0.3, 1.0));
}

TEST_CASE("cumulative weights: uniform tail sums") {
  const auto w = cumulative_weights({0.25, 0.25, 0.25, 0.25});
  CHECK(w.A[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w.A[1] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(w.A[2] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w.A[3] == doctest::Approx(0.25).epsilon(1e-15));

  const auto u10 = uniform_weights(10);
  for (int t = 1; t <= 10; ++t)
    CHECK(u10.At(t) == doctest::Approx((10.0 - t + 1.0) / 10.0).epsilon(1e-12));
}

TEST_CASE("full weight at the start of generation gives constant A == 1") {
  const auto w = rcg_weights(4);
  CHECK(w.alpha[3] == 1.0);
  for (double At : w.A) CHECK(At == 1.0);
}

TEST_CASE("A differences recover alpha exactly") {
  Rng rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    const int T = 1 + static_cast<int>(rng.uniform_index(12));
    std::vector<double> a(T);
    double s = 0;
    for (int t = 0; t < T; ++t) s += (a[t] = rng.gamma(1.0));
    for (int t = 0; t < T; ++t) a[t] /= s;
    const auto w = cumulative_weights(a);
    CHECK(std::abs(w.A[0] - 1.0) <= 1e-12);
    for (int t = 1; t <= T; ++t) {
      const double next = t < T ? w.A[t] : 0.0;
      CHECK(std::abs((w.A[t - 1] - next) - w.alpha[t - 1]) <= 1e-12);
      if (t < T) CHECK(w.A[t] <= w.A[t - 1] + 1e-15);  // nonincreasing
    }
  }
}

TEST_CASE("cumulative weights input validation") {
  CHECK_THROWS(cumulative_weights({0.5, -0.1, 0.6}));
  CHECK_THROWS(cumulative_weights({0.5, 0.4}));  // sums to 0.9
  CHECK_THROWS(cumulative_weights({}));
}

TEST_CASE("curriculum weights") {
  Curriculum lin{CurriculumKind::linear_phase_in, 50, 2.0, 0.0, 0};
  CHECK(curriculum_weight(lin, 0) == 0.0);
  CHECK(curriculum_weight(lin, 25) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(curriculum_weight(lin, 50) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(curriculum_weight(lin, 100) == doctest::Approx(2.0).epsilon(1e-15));

  Curriculum cst{CurriculumKind::constant, 0, 0.7, 0.0, 0};
  for (int n : {0, 3, 999}) CHECK(curriculum_weight(cst, n) == 0.7);

  Curriculum cos_d{CurriculumKind::cosine_decay, 0, 1.0, 0.25, 80};
  CHECK(curriculum_weight(cos_d, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(curriculum_weight(cos_d, 80) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(curriculum_weight(cos_d, 200) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(curriculum_weight(cos_d, 40) == doctest::Approx(0.625).epsilon(1e-12));

  // weights stay inside [floor, peak], phase-in monotone up to warmup
  for (int n = 0; n < 200; ++n) {
    const double v = curriculum_weight(cos_d, n);
    CHECK(v >= 0.25 - 1e-15);
    CHECK(v <= 1.0 + 1e-15);
    if (n > 0 && n <= 50)
      CHECK(curriculum_weight(lin, n) >= curriculum_weight(lin, n - 1));
  }
  CHECK_THROWS(curriculum_weight(lin, -1));
}

TEST_CASE("kind parsing round trips") {
  CHECK(curriculum_kind_from_string("linear-phase-in") == CurriculumKind::linear_phase_in);
  CHECK(to_string(CurriculumKind::cosine_decay) == "cosine-decay");
  CHECK_THROWS(curriculum_kind_from_string("bogus"));
  CHECK(noise_kind_from_string("cosine") == NoiseKind::cosine);
  CHECK_THROWS(noise_kind_from_string("bogus"));
}
