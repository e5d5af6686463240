// Serial reference vs OpenMP kernels for split search, tree fitting and batch prediction.

#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "aq/forecast/kernels.hpp"

using namespace aq::forecast;

namespace {

std::vector<SupervisedRow> make_rows(std::size_t n, std::size_t f) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<SupervisedRow> rows(n);
  for (auto& r : rows) {
    r.features.resize(f);
    for (auto& x : r.features) x = noise(rng);
    r.target = 3.0 * r.features[0] - 2.0 * r.features[f / 2] + noise(rng);
  }
  return rows;
}

template <typename Search>
void run_split(benchmark::State& state, Search search) {
  const auto rows = make_rows(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const TreeParams params{};
  for (auto _ : state) benchmark::DoNotOptimize(search(kernels::NodeRows{rows, idx}, params));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

void BM_BestSplitSerial(benchmark::State& s) { run_split(s, kernels::best_split_serial); }
void BM_BestSplitParallel(benchmark::State& s) { run_split(s, kernels::best_split_parallel); }

template <typename Fit>
void run_fit(benchmark::State& state, Fit fit) {
  const auto rows = make_rows(static_cast<std::size_t>(state.range(0)), 25);
  const TreeParams params{};
  for (auto _ : state) benchmark::DoNotOptimize(fit(rows, params));
}

void BM_FitSerial(benchmark::State& s) { run_fit(s, kernels::fit_tree_serial); }
void BM_FitParallel(benchmark::State& s) { run_fit(s, kernels::fit_tree_parallel); }

template <typename Predict>
void run_predict(benchmark::State& state, Predict predict) {
  const auto rows = make_rows(static_cast<std::size_t>(state.range(0)), 25);
  const auto tree = kernels::fit_tree_serial(rows, TreeParams{});
  for (auto _ : state) benchmark::DoNotOptimize(predict(tree, rows));
}

void BM_PredictSerial(benchmark::State& s) { run_predict(s, kernels::predict_batch_serial); }
void BM_PredictParallel(benchmark::State& s) { run_predict(s, kernels::predict_batch_parallel); }

}  // namespace

BENCHMARK(BM_BestSplitSerial)->Args({336, 25})->Args({5000, 32})->Args({20000, 64});
BENCHMARK(BM_BestSplitParallel)->Args({336, 25})->Args({5000, 32})->Args({20000, 64});
BENCHMARK(BM_FitSerial)->Arg(336)->Arg(5000);
BENCHMARK(BM_FitParallel)->Arg(336)->Arg(5000);
BENCHMARK(BM_PredictSerial)->Arg(100000);
BENCHMARK(BM_PredictParallel)->Arg(100000);

BENCHMARK_MAIN();
