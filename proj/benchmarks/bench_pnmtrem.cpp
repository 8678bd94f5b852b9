#include <benchmark/benchmark.h>

#include "pnmtrem/pnmtrem.hpp"

using namespace pnmtrem;

static void BM_GaussHermite(benchmark::State& state) {
  const int order = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(gauss_hermite(order));
}
BENCHMARK(BM_GaussHermite)->Arg(20)->Arg(60);

static void BM_EvaluateBaseline(benchmark::State& state) {
  const TruthConfig truth;
  const PanelData d = simulate_panel(truth, 1);
  const QuadratureRule rule = gauss_hermite(20);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_baseline(truth.baseline, d, rule));
}
BENCHMARK(BM_EvaluateBaseline)->Unit(benchmark::kMillisecond);

static void BM_EvaluateMain(benchmark::State& state) {
  const TruthConfig truth;
  const PanelData d = simulate_panel(truth, 1);
  const QuadratureRule rule = gauss_hermite(20);
  const ConstraintSolution sol = ConstraintSolution::solve(d, truth.baseline.beta_star, AnchorPoint::zero(d));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_main(truth.main, d, rule, sol));
}
BENCHMARK(BM_EvaluateMain)->Unit(benchmark::kMillisecond);

static void BM_FullFit(benchmark::State& state) {
  const PanelData d = simulate_panel(TruthConfig{}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(fit(d));
}
BENCHMARK(BM_FullFit)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
