// Serial reference kernels vs their OpenMP versions, plus a sweep fan-out.

#include <benchmark/benchmark.h>

#include <random>

#include "sparf/core/attention.hpp"
#include "sparf/core/kernels.hpp"
#include "sparf/system/sweep.hpp"

namespace {

using sparf::core::Matrix;
namespace kernels = sparf::core::kernels;

struct Operands {
  Matrix rows;
  std::vector<double> q, weights, out_rows, out_cols;

  explicit Operands(std::size_t n, std::size_t d = 128)
      : rows(n, d), q(d), weights(n), out_rows(n), out_cols(d) {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> nd;
    for (auto& v : rows.data()) v = nd(rng);
    for (auto& v : q) v = nd(rng);
    for (auto& v : weights) v = nd(rng);
  }
};

void BM_RowLogitsSerial(benchmark::State& state) {
  Operands op(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    kernels::row_logits_serial(op.q, op.rows, 0.088, op.out_rows);
    benchmark::DoNotOptimize(op.out_rows.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_RowLogitsParallel(benchmark::State& state) {
  Operands op(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    kernels::row_logits_parallel(op.q, op.rows, 0.088, op.out_rows);
    benchmark::DoNotOptimize(op.out_rows.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_WeightedSumSerial(benchmark::State& state) {
  Operands op(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    kernels::weighted_row_sum_serial(op.weights, op.rows, op.out_cols);
    benchmark::DoNotOptimize(op.out_cols.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_WeightedSumParallel(benchmark::State& state) {
  Operands op(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    kernels::weighted_row_sum_parallel(op.weights, op.rows, op.out_cols);
    benchmark::DoNotOptimize(op.out_cols.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SparfHead(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  const auto t = sparf::core::random_head(128, s, 7);
  const sparf::core::HeadConfig cfg{128, s, 16, s / 8, 8, 16, 2};
  for (auto _ : state) benchmark::DoNotOptimize(sparf::core::sparf_attention(t, cfg));
}

void BM_PresetSweep(benchmark::State& state) {
  const auto scenarios = sparf::system::preset_scenarios("fig-throughput", 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(sparf::system::run_sweep(scenarios, static_cast<int>(state.range(0))));
}

}  // namespace

BENCHMARK(BM_RowLogitsSerial)->RangeMultiplier(4)->Range(1 << 10, 1 << 16);
BENCHMARK(BM_RowLogitsParallel)->RangeMultiplier(4)->Range(1 << 10, 1 << 16)->UseRealTime();
BENCHMARK(BM_WeightedSumSerial)->RangeMultiplier(4)->Range(1 << 10, 1 << 16);
BENCHMARK(BM_WeightedSumParallel)->RangeMultiplier(4)->Range(1 << 10, 1 << 16)->UseRealTime();
BENCHMARK(BM_SparfHead)->Arg(1024)->Arg(4096);
BENCHMARK(BM_PresetSweep)->Arg(1)->Arg(0)->UseRealTime()->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
