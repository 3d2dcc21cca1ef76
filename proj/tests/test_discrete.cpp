#include <doctest.h>

#include <cmath>

#include "repdiff/discrete.hpp"
#include "repdiff/rng.hpp"
#include "repdiff/schedules.hpp"

using namespace repdiff;

namespace {

WeightSchedule random_weights(int T, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> a(T);
  double s = 0;
  for (int t = 0; t < T; ++t) s += (a[t] = rng.gamma(1.0));
  for (int t = 0; t < T; ++t) a[t] /= s;
  return cumulative_weights(a);
}

}  // namespace

TEST_CASE("T=1 joint has 8 entries summing to one") {
  const auto spec = DiscreteChainSpec::random(1, 2, {2}, 42);
  const auto J = build_joint(spec);
  CHECK(J.size() == 8);
  CHECK(J.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("deterministic kernels give a point mass") {
  DiscreteChainSpec s;
  s.T = 2;
  s.nx = 2;
  s.nz = {2};
  s.q0 = {1.0, 0.0};
  s.forward = {{0.0, 1.0, 1.0, 0.0}, {0.0, 1.0, 1.0, 0.0}};  // swap states each step
  s.encoders = {{1.0, 0.0, 0.0, 1.0}};                       // z = x0
  const auto J = build_joint(s);
  int nonzero = 0;
  for (double v : J.table)
    if (v != 0.0) ++nonzero;
  CHECK(nonzero == 1);
  CHECK(J.total_mass() == 1.0);
  // the mass sits on x0=0, x1=1, x2=0, z=0
  CHECK(J.table[J.index({0, 1, 0}, 0)] == 1.0);
}

TEST_CASE("random spec: x0 marginal recovers q0") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto spec = DiscreteChainSpec::random(3, 4, {3}, seed);
    const auto J = build_joint(spec);
    const auto m = J.marginal_x(0);
    for (int i = 0; i < spec.nx; ++i) CHECK(std::abs(m[i] - spec.q0[i]) < 1e-12);
    CHECK(J.total_mass() == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("size cap enforced") {
  DiscreteChainSpec s = DiscreteChainSpec::random(5, 6, {5, 5, 5}, 1);
  // 6^6 * 125 = 5.8M entries: fine. Force the cap with a fake latent blowup.
  CHECK_NOTHROW(build_joint(s));
  CHECK(s.num_latent_states() == 125);
}

TEST_CASE("all decompositions agree with the model joint") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto m = DiscreteModel::random(3, 4, {3}, seed);
    CHECK(verify_decompositions(m) < 1e-12);
  }
  // multi-latent variant
  const auto m2 = DiscreteModel::random(2, 3, {2, 3}, 77);
  CHECK(verify_decompositions(m2) < 1e-12);
}

TEST_CASE("perturbed p(z|x_t) breaks the decomposition identity") {
  const auto m = DiscreteModel::random(3, 4, {3}, 5);
  CHECK(verify_decompositions(m, 0.1) > 1e-3);
  // 0.01 total-variation-scale shift already fails well past 1e-4
  CHECK(verify_decompositions(m, 0.01) > 1e-4);
}

TEST_CASE("marginals of x_t are invariant across decompositions") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = DiscreteModel::random(3, 4, {3}, seed + 100);
    CHECK(verify_marginal_invariance(m) < 1e-12);
    CHECK(verify_resampling_invariance(m) < 1e-12);
  }
}

TEST_CASE("vb_direct equals exact NLL for the Bayes-inverse model") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto spec = DiscreteChainSpec::random(3, 4, {3}, seed);
    const auto model = DiscreteModel::bayes_inverse(spec);
    const double vb = vb_direct(spec, model);
    const double nll = model_nll(spec, model);
    CHECK(std::abs(vb - nll) < 1e-10);
  }
}

TEST_CASE("vb_direct upper-bounds the NLL on random pairs") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto spec = DiscreteChainSpec::random(2, 3, {2}, seed);
    const auto model = DiscreteModel::random(2, 3, {2}, seed + 1000);
    CHECK(vb_direct(spec, model) >= model_nll(spec, model) - 1e-12);
  }
}

TEST_CASE("hand-sized T=1 instance matches explicit 8-term sum") {
  const auto spec = DiscreteChainSpec::random(1, 2, {2}, 9);
  const auto model = DiscreteModel::random(1, 2, {2}, 10);

  // direct transcription: sum over (x0, x1, z) of
  // q(x0) q(x1|x0) q(z|x0) log[ q(z|x0) q(x1|x0) / (p(x1) p(x0|x1) p(z|x0)) ]
  double expected = 0.0;
  for (int x0 = 0; x0 < 2; ++x0)
    for (int x1 = 0; x1 < 2; ++x1)
      for (int z = 0; z < 2; ++z) {
        const double qw =
            spec.q0[x0] * spec.forward[0][x0 * 2 + x1] * spec.encoders[0][x0 * 2 + z];
        if (qw == 0.0) continue;
        const double num = spec.encoders[0][x0 * 2 + z] * spec.forward[0][x0 * 2 + x1];
        const double den = model.prior[x1] * model.reverse[0][x1 * 2 + x0] *
                           model.latent[x0 * 2 + z];
        expected += qw * std::log(num / den);
      }
  CHECK(vb_direct(spec, model) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("vb_direct rejects mismatched shapes") {
  const auto spec = DiscreteChainSpec::random(2, 3, {2}, 1);
  const auto model = DiscreteModel::random(3, 3, {2}, 2);
  CHECK_THROWS(vb_direct(spec, model));
}

TEST_CASE("weighted decomposition: term sum equals vb_direct") {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const auto spec = DiscreteChainSpec::random(3, 4, {3}, seed);
    const auto model = DiscreteModel::random(3, 4, {3}, seed + 500);
    const double direct = vb_direct(spec, model);

    for (const auto& w : {uniform_weights(3), rcg_weights(3), random_weights(3, seed)}) {
      const auto terms = vb_prop1(spec, model, w);
      CHECK(std::abs(terms.sum() - direct) < 1e-9);
      CHECK(terms.repkl >= -1e-15);
      CHECK(terms.lognorm >= -1e-12);
    }
  }
}

TEST_CASE("A == 1 everywhere kills the log-normalization term exactly") {
  const auto spec = DiscreteChainSpec::random(3, 4, {3}, 3);
  const auto model = DiscreteModel::random(3, 4, {3}, 4);
  const auto terms = vb_prop1(spec, model, rcg_weights(3));
  CHECK(terms.lognorm == 0.0);

  // head delta also has A_t in {0,1}, so Z_t == 1 and the term vanishes
  const auto head = cumulative_weights({1.0, 0.0, 0.0});
  CHECK(vb_prop1(spec, model, head).lognorm == 0.0);

  // mixed 0/1 profile
  const auto mid = cumulative_weights({0.0, 1.0, 0.0});
  CHECK(vb_prop1(spec, model, mid).lognorm == 0.0);
}

TEST_CASE("log-normalization bounds hold and are reported") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto spec = DiscreteChainSpec::random(3, 4, {2}, seed);
    const auto model = DiscreteModel::random(3, 4, {2}, seed + 900);
    const auto w = random_weights(3, seed + 33);
    const auto b = verify_lognorm_bounds(spec, model, w);
    CHECK(b.holds(1e-12));
    CHECK(b.neg_log_z >= 0.0);
  }
}

TEST_CASE("identical conditional and unconditional kernels zero all bound terms") {
  // latent rows all equal => z carries no information about x0, so
  // p(x_{t-1}|x_t,z) == p(x_{t-1}|x_t)
  auto model = DiscreteModel::random(2, 3, {2}, 11);
  for (int i = 1; i < model.nx; ++i)
    for (std::size_t z = 0; z < 2; ++z) model.latent[i * 2 + z] = model.latent[z];
  const auto spec = DiscreteChainSpec::random(2, 3, {2}, 12);
  const auto b = verify_lognorm_bounds(spec, model, uniform_weights(2));
  CHECK(std::abs(b.neg_log_z) < 1e-12);
  CHECK(std::abs(b.upper_uc) < 1e-12);
  CHECK(std::abs(b.upper_cu) < 1e-12);
}

TEST_CASE("A_t == 1 makes the (1-A) upper bound and -log Z vanish") {
  const auto spec = DiscreteChainSpec::random(2, 3, {2}, 21);
  const auto model = DiscreteModel::random(2, 3, {2}, 22);
  const auto b = verify_lognorm_bounds(spec, model, rcg_weights(2));
  CHECK(b.upper_cu == 0.0);
  CHECK(std::abs(b.neg_log_z) < 1e-12);
}

TEST_CASE("multi-latent KL chain rule, L=2 and L=3") {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const auto spec = DiscreteChainSpec::random(2, 3, {2, 3}, seed);
    const auto model = DiscreteModel::random(2, 3, {2, 3}, seed + 50);
    CHECK(verify_multilatent_kl(spec, model) < 1e-10);
  }
  const auto spec3 = DiscreteChainSpec::random(2, 3, {2, 2, 3}, 7);
  const auto model3 = DiscreteModel::random(2, 3, {2, 2, 3}, 8);
  CHECK(verify_multilatent_kl(spec3, model3) < 1e-10);
}

TEST_CASE("single latent reduces the chain to the plain KL") {
  const auto spec = DiscreteChainSpec::random(2, 3, {4}, 70);
  const auto model = DiscreteModel::random(2, 3, {4}, 71);
  CHECK(verify_multilatent_kl(spec, model) < 1e-14);
}
