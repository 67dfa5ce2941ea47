// Microbenchmarks for the hot paths: single fits, full rank sweeps, and the
// ranking metric. Run with --benchmark_min_time or filters as usual.

#include <benchmark/benchmark.h>

#include <vector>

#include "matu/evaluation.hpp"
#include "matu/parafac2.hpp"
#include "matu/rng.hpp"
#include "matu/scorer.hpp"
#include "matu/synthetic.hpp"

namespace {

matu::SyntheticTensor demo_tensor(std::uint64_t seed) {
  matu::SyntheticSpec spec;
  spec.n_runs = 10;
  spec.n_agents = 3;
  spec.step_range = {3, 8};
  spec.d = 32;
  spec.true_rank = 2;
  spec.divergence = 0.5;
  spec.seed = seed;
  return matu::generate_synthetic_tensor(spec);
}

void BM_FitSingleRank(benchmark::State& state) {
  const matu::SyntheticTensor st = demo_tensor(7);
  matu::FitConfig cfg;
  cfg.rank = static_cast<int>(state.range(0));
  cfg.max_iters = 200;
  cfg.restarts = 2;
  cfg.rel_tol = 1e-6;
  for (auto _ : state) {
    benchmark::DoNotOptimize(matu::fit(st.tensor, cfg));
  }
}
BENCHMARK(BM_FitSingleRank)->Arg(1)->Arg(2)->Arg(4)->Arg(8)
    ->Unit(benchmark::kMillisecond);

void BM_ScoreTaskSweep(benchmark::State& state) {
  const matu::SyntheticTensor st = demo_tensor(11);
  matu::FitConfig cfg;
  cfg.max_iters = 200;
  cfg.restarts = 2;
  cfg.rel_tol = 1e-6;
  const int r_max = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(matu::score_task("bench", st.tensor, r_max, cfg));
  }
}
BENCHMARK(BM_ScoreTaskSweep)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ReconstructionLoss(benchmark::State& state) {
  const matu::SyntheticTensor st = demo_tensor(13);
  for (auto _ : state) {
    benchmark::DoNotOptimize(matu::reconstruction_loss(st.tensor, st.truth));
  }
}
BENCHMARK(BM_ReconstructionLoss)->Unit(benchmark::kMicrosecond);

void BM_Auroc(benchmark::State& state) {
  matu::SeededRng rng(17);
  std::vector<matu::LabeledScore> items;
  const auto n = static_cast<std::size_t>(state.range(0));
  for (std::size_t i = 0; i < n; ++i) {
    matu::LabeledScore s;
    s.task_id = "t" + std::to_string(i);
    s.U = rng.uniform01();
    s.correct = i % 2 == 0 ? 1 : 0;
    items.push_back(std::move(s));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(matu::auroc(items));
  }
}
BENCHMARK(BM_Auroc)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
