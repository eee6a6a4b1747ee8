#include <benchmark/benchmark.h>

#include "latentdr/attention.hpp"
#include "latentdr/harness.hpp"
#include "latentdr/latentdr.hpp"
#include "latentdr/ops.hpp"

using namespace latentdr;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({rows, cols});
  for (double& v : t.values()) v = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, n, 1);
  const Tensor b = random_matrix(n, n, 2);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(matmul(tape.constant(a), tape.constant(b)).value().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(96)->Arg(256);

void BM_SelfAttentionForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  ParameterRegistry registry;
  Rng rng(3);
  const AttentionWeights w = AttentionWeights::create(registry, "sa", d, 4, d / 4, rng);
  const Tensor z = random_matrix(batch, d, 4);
  for (auto _ : state) {
    Tape tape;
    Rng drop(5);
    const Var out = self_attention(tape.leaf(z), w, 0.5, true, drop);
    tape.backward(mean(out));
    registry.zero_grad();
  }
}
BENCHMARK(BM_SelfAttentionForwardBackward)->Arg(32)->Arg(96)->Arg(300);

void BM_TrainingStep(benchmark::State& state) {
  ExperimentConfig cfg;
  cfg.variant = static_cast<AblationVariant>(state.range(0));
  ModelBundle bundle(cfg.model_config(), Rng(6));
  SgdOptimizer optimizer(SgdConfig{cfg.base_lr, cfg.momentum, cfg.weight_decay});
  TrainStepOptions opts;
  opts.variant = cfg.variant;
  const std::size_t rows = 3 * cfg.batch_size;
  const Tensor x = random_matrix(rows, cfg.input_dim, 7);
  std::vector<int> labels(rows);
  for (std::size_t i = 0; i < rows; ++i) labels[i] = static_cast<int>(i % cfg.classes);
  const Tensor y = one_hot(labels, cfg.classes);
  Rng rng(8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(training_step(x, y, bundle, optimizer, opts, rng).total);
  }
}
BENCHMARK(BM_TrainingStep)
    ->Arg(static_cast<int>(AblationVariant::ERM))
    ->Arg(static_cast<int>(AblationVariant::DPlusR))
    ->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
