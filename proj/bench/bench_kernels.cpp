// Serial reference against the OpenMP kernels.

#include "tml/experiment.hpp"
#include "tml/limit_theory.hpp"

#include <benchmark/benchmark.h>

namespace {

void BM_DkSerial(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(tml::estimate_Dk_serial(3, 2, static_cast<std::uint64_t>(state.range(0)), 1).mean);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DkSerial)->Arg(1 << 20)->Unit(benchmark::kMillisecond);

void BM_DkParallel(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(tml::estimate_Dk(3, 2, static_cast<std::uint64_t>(state.range(0)), 1).mean);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DkParallel)->Arg(1 << 20)->Unit(benchmark::kMillisecond);

tml::ExperimentConfig trial_config(int trials) {
  tml::ExperimentConfig c;
  c.d = 2;
  c.n = 5000;
  c.trials = trials;
  c.lambdas = {0.0};
  c.dk_samples = 1 << 14;
  return c;
}

void BM_TrialsSerial(benchmark::State& state) {
  const tml::ExperimentConfig c = trial_config(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(tml::run_experiment_serial(c).stats.trials);
}
BENCHMARK(BM_TrialsSerial)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_TrialsParallel(benchmark::State& state) {
  const tml::ExperimentConfig c = trial_config(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(tml::run_experiment(c).stats.trials);
}
BENCHMARK(BM_TrialsParallel)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
