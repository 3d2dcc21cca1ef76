#include <benchmark/benchmark.h>

#include "repdiff/autodiff.hpp"
#include "repdiff/diffusion.hpp"
#include "repdiff/discrete.hpp"
#include "repdiff/metrics.hpp"
#include "repdiff/rng.hpp"

using namespace repdiff;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros(r, c);
  for (auto& v : t.raw()) v = rng.normal();
  return t;
}

void BM_MatmulForward(benchmark::State& state) {
  const std::size_t n = state.range(0);
  const Tensor A = random_tensor(256, n, 1), B = random_tensor(n, n, 2);
  for (auto _ : state) {
    Graph g;
    Var r = g.matmul(g.leaf(A), g.leaf(B));
    benchmark::DoNotOptimize(r.value().data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * 256 * n * n);
}
BENCHMARK(BM_MatmulForward)->Arg(64)->Arg(128)->Arg(256);

void BM_MlpForwardBackward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.den = {2, 4, static_cast<int>(state.range(0)), 8, 0, 8, 0, 2};
  cfg.loss.mode = LossMode::vanilla;
  const auto model = DiffusionModel::init(cfg, 1);
  const auto ns = make_noise_schedule(NoiseKind::linear, 100, 1e-4, 0.02);
  DiffusionModel::Batch batch;
  batch.x0 = random_tensor(256, 2, 3);
  batch.draws = draw_diffusion_batch(ns, 256, 2, 4);
  for (auto _ : state) {
    Graph g;
    ParamVars pv = param_leaves(g, model.params);
    auto e = model.loss_expr(g, pv, ns, batch, nullptr, 1.0, 1.0);
    g.backward(e.total);
    benchmark::DoNotOptimize(pv.at("den.l0.W").grad().data());
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_MlpForwardBackward)->Arg(64)->Arg(128);

void BM_DiscreteDecompositionCheck(benchmark::State& state) {
  const auto model = DiscreteModel::random(static_cast<int>(state.range(0)), 4, {3}, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(verify_decompositions(model));
  }
}
BENCHMARK(BM_DiscreteDecompositionCheck)->Arg(2)->Arg(3)->Arg(4);

void BM_WeightedBoundDecomposition(benchmark::State& state) {
  const auto spec = DiscreteChainSpec::random(3, 4, {3}, 9);
  const auto model = DiscreteModel::random(3, 4, {3}, 10);
  const auto w = uniform_weights(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(vb_prop1(spec, model, w).sum());
  }
}
BENCHMARK(BM_WeightedBoundDecomposition);

void BM_SlicedWasserstein(benchmark::State& state) {
  const Tensor a = random_tensor(4096, 2, 11), b = random_tensor(4096, 2, 12);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sliced_wasserstein(a, b, static_cast<int>(state.range(0)), 5));
  }
}
BENCHMARK(BM_SlicedWasserstein)->Arg(64)->Arg(512);

void BM_AncestralSample(benchmark::State& state) {
  ModelConfig cfg;
  cfg.den = {2, 4, 128, 8, 0, 8, 0, 2};
  const auto model = DiffusionModel::init(cfg, 1);
  const auto ns = make_noise_schedule(NoiseKind::linear, 100, 1e-4, 0.02);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ancestral_sample(model, ns, static_cast<std::size_t>(state.range(0)), nullptr, nullptr,
                         7)
            .data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AncestralSample)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
