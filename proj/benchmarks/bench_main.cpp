#include <benchmark/benchmark.h>

#include <cmath>
#include <filesystem>

#include "grpolab/grpolab.hpp"

namespace {

using namespace grpolab;

std::vector<RewardTrajectory> synthetic_runs(std::uint64_t total, double noise) {
  struct Run {
    const char* id;
    double size, r_init;
  };
  const Run runs[] = {{"llama-3b", 3, 0.79}, {"qwen-3b", 3, 0.50}, {"qwen-7b", 7, 1.88}, {"llama-8b", 8, 0.40}};
  std::vector<RewardTrajectory> out;
  Rng rng(1);
  for (const Run& r : runs) {
    RewardTrajectory t(RunMeta{r.id, r.size, r.r_init, total});
    for (std::uint64_t k = 0; k <= total; ++k) {
      t.record(k, eval_sigmoid(kPublishedGlobals, r.r_init, r.size, static_cast<double>(k) / total) +
                      noise * standard_normal(rng));
    }
    out.push_back(std::move(t));
  }
  return out;
}

ToyTask toy_task() { return load_task(std::filesystem::path(GRPOLAB_DATA_DIR) / "toy.json"); }

void BM_Forward(benchmark::State& state) {
  const ToyTask task = toy_task();
  PolicyInit init;
  init.seed = 3;
  const CategoricalPolicy policy = make_policy(task, init);
  for (auto _ : state) benchmark::DoNotOptimize(policy.forward(std::size_t{0}));
}
BENCHMARK(BM_Forward);

void BM_TrainStep(benchmark::State& state) {
  const ToyTask task = toy_task();
  const CategoricalPolicy policy = make_policy(task, PolicyInit{});
  GrpoConfig config;
  config.steps = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(task, policy, config));
}
BENCHMARK(BM_TrainStep);

void BM_Train500(benchmark::State& state) {
  const ToyTask task = toy_task();
  const CategoricalPolicy policy = make_policy(task, PolicyInit{});
  GrpoConfig config;
  config.steps = 500;
  for (auto _ : state) benchmark::DoNotOptimize(train(task, policy, config));
}
BENCHMARK(BM_Train500)->Unit(benchmark::kMillisecond);

void BM_FitSigmoid(benchmark::State& state) {
  const auto runs = synthetic_runs(static_cast<std::uint64_t>(state.range(0)), 0.02);
  for (auto _ : state) benchmark::DoNotOptimize(fit_sigmoid(runs));
}
BENCHMARK(BM_FitSigmoid)->Arg(50)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Forecast(benchmark::State& state) {
  const RewardTrajectory prefix = synthetic_runs(200, 0.02)[3].prefix(0.3);
  BudgetSpec budget;
  budget.total_steps = 200;
  ForecastOptions options;
  options.bootstrap_resamples = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(forecast(prefix, budget, options));
}
BENCHMARK(BM_Forecast)->Arg(0)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_FitPowerLaw(benchmark::State& state) {
  RewardTrajectory t(RunMeta{"power", 1.0, 0.0, 1000});
  for (std::uint64_t k = 1; k <= 1000; ++k) t.record(k, 1.0 - std::pow(static_cast<double>(k), -0.3));
  for (auto _ : state) benchmark::DoNotOptimize(fit_power_law(t));
}
BENCHMARK(BM_FitPowerLaw);

}  // namespace

BENCHMARK_MAIN();
