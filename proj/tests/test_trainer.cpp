#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "repdiff/config.hpp"
#include "repdiff/rng.hpp"
#include "repdiff/trainer.hpp"

using namespace repdiff;

namespace {

// small, fast experiment configuration shared by the trainer tests
ExperimentConfig tiny_config(int epochs = 4) {
  ExperimentConfig cfg;
  cfg.dataset = {4, 512, 1.0, 0.15, 7, true};
  cfg.noise.T = 25;
  cfg.denoiser = {3, 24, 8, 2};
  cfg.encoder_x.has_seed = true;
  cfg.encoder_x.seed = 3;
  cfg.encoder_x.out_dim = 6;
  cfg.modality.has_seed = true;
  cfg.modality.seed = 4;
  cfg.metrics.has_seed = true;
  cfg.metrics.eval_seed = 5;
  cfg.metrics.sw_projections = 64;
  cfg.trainer.epochs = epochs;
  cfg.trainer.batch = 128;
  cfg.trainer.eval_samples = 256;
  cfg.loss.align_layer_y = 3;
  return cfg;
}

}  // namespace

TEST_CASE("first adam step is approximately -lr * sign(g)") {
  Params p{{"w", Tensor::vector({1.0, -2.0, 3.0})}};
  Params g{{"w", Tensor::vector({10.0, -5.0, 0.5})}};  // |g| >> eps
  AdamConfig cfg;
  cfg.lr = 1e-3;
  AdamState st = AdamState::init(cfg, p);
  adam_step(st, p, g);
  CHECK(std::abs(p.at("w")[0] - (1.0 - 1e-3)) < 1e-3 * 1e-6);
  CHECK(std::abs(p.at("w")[1] - (-2.0 + 1e-3)) < 1e-3 * 1e-6);
  CHECK(std::abs(p.at("w")[2] - (3.0 - 1e-3)) < 1e-3 * 1e-5);
}

TEST_CASE("zero gradients leave parameters unchanged") {
  Params p{{"w", Tensor::vector({1.0, -2.0})}};
  Params g{{"w", Tensor::vector({0.0, 0.0})}};
  AdamState st = AdamState::init({}, p);
  adam_step(st, p, g);
  CHECK(p.at("w")[0] == 1.0);
  CHECK(p.at("w")[1] == -2.0);
}

TEST_CASE("non-finite gradient aborts with the parameter name") {
  Params p{{"layer.weird", Tensor::vector({1.0})}};
  Params g{{"layer.weird", Tensor::vector({std::nan("")})}};
  AdamState st = AdamState::init({}, p);
  CHECK_THROWS_WITH_AS(adam_step(st, p, g), doctest::Contains("layer.weird"),
                       std::runtime_error);
}

TEST_CASE("adam is bitwise deterministic over 100 steps") {
  auto run = [] {
    Params p{{"a", Tensor::vector({0.5, -0.5, 1.5})}, {"b", Tensor::vector({2.0})}};
    AdamState st = AdamState::init({}, p);
    Rng rng(42);
    for (int i = 0; i < 100; ++i) {
      Params g{{"a", Tensor::vector({rng.normal(), rng.normal(), rng.normal()})},
               {"b", Tensor::vector({rng.normal()})}};
      adam_step(st, p, g);
    }
    return p;
  };
  const Params p1 = run(), p2 = run();
  CHECK(p1.at("a").raw() == p2.at("a").raw());
  CHECK(p1.at("b").raw() == p2.at("b").raw());
}

TEST_CASE("train is deterministic per (mode, config, seed)") {
  const auto cfg = tiny_config(2);
  const auto data = resolve_dataset(cfg);
  const auto setup = resolve_setup(cfg, TrainMode::reed, data);
  const auto r1 = train(TrainMode::reed, data, setup, 11);
  const auto r2 = train(TrainMode::reed, data, setup, 11);
  REQUIRE(r1.records.size() == r2.records.size());
  for (std::size_t i = 0; i < r1.records.size(); ++i) {
    CHECK(r1.records[i].loss_total == r2.records[i].loss_total);
    CHECK(r1.records[i].loss_repgen == r2.records[i].loss_repgen);
  }
  CHECK(flatten_params(r1.model.params).raw() == flatten_params(r2.model.params).raw());
  const auto r3 = train(TrainMode::reed, data, setup, 12);
  CHECK(flatten_params(r1.model.params).raw() != flatten_params(r3.model.params).raw());
}

TEST_CASE("vanilla ignores alignment and reed with zero lambdas matches it bitwise") {
  auto cfg = tiny_config(2);
  cfg.loss.lambda_x = 0.0;
  cfg.loss.lambda_y = 0.0;
  cfg.alpha_curriculum = {"constant", 0, 1.0, 0.0};
  cfg.beta_curriculum = {"constant", 0, 1.0, 0.0};
  const auto data = resolve_dataset(cfg);
  const auto rv = train(TrainMode::vanilla, data, resolve_setup(cfg, TrainMode::vanilla, data), 5);
  const auto rr = train(TrainMode::reed, data, resolve_setup(cfg, TrainMode::reed, data), 5);
  REQUIRE(rv.records.size() == rr.records.size());
  for (std::size_t i = 0; i < rv.records.size(); ++i)
    CHECK(rv.records[i].loss_total == rr.records[i].loss_total);
  CHECK(flatten_params(rv.model.params).raw() == flatten_params(rr.model.params).raw());
}

TEST_CASE("repa equals reed with constant curricula and single latent") {
  auto cfg = tiny_config(3);
  cfg.loss.lambda_y = 0.0;  // single-latent
  cfg.alpha_curriculum = {"constant", 0, 1.0, 0.0};
  cfg.beta_curriculum = {"constant", 0, 1.0, 0.0};
  const auto data = resolve_dataset(cfg);
  const auto ra = train(TrainMode::repa, data, resolve_setup(cfg, TrainMode::repa, data), 5);
  const auto rb = train(TrainMode::reed, data, resolve_setup(cfg, TrainMode::reed, data), 5);
  REQUIRE(ra.records.size() == rb.records.size());
  for (std::size_t i = 0; i < ra.records.size(); ++i) {
    CHECK(ra.records[i].loss_total == rb.records[i].loss_total);
    CHECK(ra.records[i].loss_diffusion == rb.records[i].loss_diffusion);
    CHECK(ra.records[i].loss_repgen == rb.records[i].loss_repgen);
  }
}

TEST_CASE("reed with linear phase-in starts at alpha(0) = 0") {
  auto cfg = tiny_config(3);
  cfg.alpha_curriculum = {"linear-phase-in", 10, 1.0, 0.0};
  const auto data = resolve_dataset(cfg);
  const auto setup = resolve_setup(cfg, TrainMode::reed, data);
  const auto r = train(TrainMode::reed, data, setup, 5);
  CHECK(r.records[0].alpha_n == 0.0);
  CHECK(r.records[0].loss_total == doctest::Approx(r.records[0].loss_repgen *
                                                   r.records[0].beta_n));
  CHECK(r.records[1].alpha_n == doctest::Approx(0.1));
  // logged weights match the schedule evaluation exactly
  for (const auto& rec : r.records) {
    CHECK(rec.alpha_n == curriculum_weight(setup.alpha_c, rec.epoch));
    CHECK(rec.beta_n == curriculum_weight(setup.beta_c, rec.epoch));
  }
}

TEST_CASE("two-stage trains alignment first, then pure diffusion") {
  auto cfg = tiny_config(4);
  cfg.trainer.two_stage_switch = 2;
  const auto data = resolve_dataset(cfg);
  const auto setup = resolve_setup(cfg, TrainMode::two_stage, data);
  const auto r = train(TrainMode::two_stage, data, setup, 5);
  CHECK(r.records[0].alpha_n == 0.0);
  CHECK(r.records[1].alpha_n == 0.0);
  CHECK(r.records[1].beta_n > 0.0);
  CHECK(r.records[2].alpha_n == 1.0);
  CHECK(r.records[2].beta_n == 0.0);
  CHECK(r.records[3].alpha_n == 1.0);
}

TEST_CASE("rcg mode trains conditionally and fits the latent prior") {
  const auto cfg = tiny_config(2);
  const auto data = resolve_dataset(cfg);
  const auto setup = resolve_setup(cfg, TrainMode::rcg, data);
  CHECK(setup.model.den.latent_dim == 6);
  const auto r = train(TrainMode::rcg, data, setup, 5);
  CHECK(r.z_prior.fitted);
  CHECK(r.z_prior.means.rows() == 4);
  CHECK_FALSE(r.diverged);
  CHECK(r.records.back().metrics.count("sliced_wasserstein") == 1);
}

TEST_CASE("exact-elbo logs all three loss terms") {
  const auto cfg = tiny_config(2);
  const auto data = resolve_dataset(cfg);
  const auto setup = resolve_setup(cfg, TrainMode::exact_elbo, data);
  const auto r = train(TrainMode::exact_elbo, data, setup, 5);
  CHECK_FALSE(r.diverged);
  const auto& rec = r.records.back();
  CHECK(rec.loss_lognorm >= 0.0);
  CHECK(rec.loss_diffusion > 0.0);
  CHECK(std::isfinite(rec.loss_repgen));
}

TEST_CASE("divergence aborts cleanly instead of looping on NaN") {
  auto cfg = tiny_config(3);
  cfg.trainer.lr = 1e200;  // parameters overflow within a step or two
  const auto data = resolve_dataset(cfg);
  const auto setup = resolve_setup(cfg, TrainMode::vanilla, data);
  const auto r = train(TrainMode::vanilla, data, setup, 5);
  CHECK(r.diverged);
  CHECK(r.divergence_info.find("epoch") != std::string::npos);
}

TEST_CASE("final eval metrics reproduce exactly from the stored model") {
  const auto cfg = tiny_config(2);
  const auto data = resolve_dataset(cfg);
  const auto setup = resolve_setup(cfg, TrainMode::repa, data);
  const auto r = train(TrainMode::repa, data, setup, 5);
  const auto again = evaluate_model(r.model, TrainMode::repa, r.z_prior, data, setup);
  for (const auto& [k, v] : r.records.back().metrics)
    CHECK(v == doctest::Approx(again.at(k)).epsilon(1e-15));
}
