// Compares the OpenMP kernels against their serial reference
// implementations on representative workloads.

#include <benchmark/benchmark.h>

#include "pass/engine.hpp"
#include "pass/pipeline.hpp"
#include "pass/trace.hpp"

namespace {

using namespace pass;

const LayerSpec kLayer{"bench", 64, 64, 56, 56, 3, 3};

SparsityTrace make_trace(uint32_t streams, uint64_t length) {
  return generate_synthetic_trace(kLayer, streams, length,
                                  SparsityModel::iid_bernoulli(0.57), 42);
}

void BM_run_engine_serial(benchmark::State& state) {
  const auto trace = make_trace(1, uint64_t(state.range(0)));
  const EngineConfig config{3, 3, 2, false};
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_engine_serial(trace, 0, config));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_run_engine_omp(benchmark::State& state) {
  const auto trace = make_trace(1, uint64_t(state.range(0)));
  const EngineConfig config{3, 3, 2, false};
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_engine(trace, 0, config));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_stats_serial(benchmark::State& state) {
  const auto trace = make_trace(8, uint64_t(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_stats_serial(trace));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 8);
}

void BM_stats_omp(benchmark::State& state) {
  const auto trace = make_trace(8, uint64_t(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_stats(trace));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 8);
}

void BM_backpressure_serial(benchmark::State& state) {
  const auto trace = make_trace(32, uint64_t(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(back_pressure_metric_serial(trace, 64));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_backpressure_omp(benchmark::State& state) {
  const auto trace = make_trace(32, uint64_t(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(back_pressure_metric(trace, 64));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_simulate_layer(benchmark::State& state) {
  const auto trace = make_trace(32, uint64_t(state.range(0)));
  const LayerConfig config{32, 64, 1, 64};
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_layer(kLayer, config, trace));
  }
}

}  // namespace

BENCHMARK(BM_run_engine_serial)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_run_engine_omp)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_stats_serial)->Arg(1 << 16);
BENCHMARK(BM_stats_omp)->Arg(1 << 16);
BENCHMARK(BM_backpressure_serial)->Arg(1 << 15);
BENCHMARK(BM_backpressure_omp)->Arg(1 << 15);
BENCHMARK(BM_simulate_layer)->Arg(1 << 13);

BENCHMARK_MAIN();
