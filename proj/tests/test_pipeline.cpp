#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pass/pipeline.hpp"

using namespace pass;

namespace {

SparsityTrace fully_dense(uint32_t window_bits, uint32_t streams,
                          uint64_t length) {
  SparsityTrace trace("dense", window_bits, streams, length);
  for (uint32_t m = 0; m < streams; ++m) {
    for (uint64_t t = 0; t < length; ++t) {
      for (uint32_t i = 0; i < window_bits; ++i) {
        trace.set_bit(m, t, i, true);
      }
    }
  }
  return trace;
}

SparsityTrace bernoulli(const LayerSpec& layer, uint32_t streams,
                        uint64_t length, double p_zero, uint64_t seed) {
  return generate_synthetic_trace(layer, streams, length,
                                  SparsityModel::iid_bernoulli(p_zero), seed);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<size_t> order(v.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(),
              [&](size_t x, size_t y) { return v[x] < v[y]; });
    std::vector<double> rank(v.size());
    size_t i = 0;
    while (i < order.size()) {
      size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) {
        ++j;
      }
      const double mean_rank = (double(i) + double(j)) / 2.0;
      for (size_t k = i; k <= j; ++k) {
        rank[order[k]] = mean_rank;
      }
      i = j + 1;
    }
    return rank;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = double(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("fully dense, fully provisioned: one output per cycle, no stalls") {
  const LayerSpec layer{"l", 4, 4, 8, 8, 3, 3};
  const uint64_t T = 8 * 8 * 2 * 2;  // par_in = par_out = 2
  const auto trace = fully_dense(9, 2, T);
  for (uint32_t w : {0u, 1u, 4u, 64u}) {
    const auto report = simulate_layer(layer, LayerConfig{2, 2, 9, w}, trace);
    CHECK(report.measured_cycles == T);
    CHECK(report.stall_cycles == 0);
    CHECK(report.windows_per_engine == T);
  }
}

TEST_CASE("lockstep barrier: the slowest constant stream dominates") {
  // Stream 0 all-zero (1 cycle per window at k=1), stream 1 all-dense
  // (9 cycles); with no buffering every output takes 9 cycles.
  const LayerSpec layer{"l", 2, 1, 4, 4, 3, 3};
  const uint64_t T = 4 * 4;  // folds are 1x1
  SparsityTrace trace("mix", 9, 2, T);
  for (uint64_t t = 0; t < T; ++t) {
    for (uint32_t i = 0; i < 9; ++i) {
      trace.set_bit(1, t, i, true);
    }
  }
  const auto report = simulate_layer(layer, LayerConfig{2, 1, 1, 0}, trace);
  CHECK(report.measured_cycles == 9 * T);
  // The model also pins the dense stream at 9 cycles/window, so there is no
  // overhead to attribute to back-pressure.
  CHECK(report.model_cycles == doctest::Approx(9.0 * T));
  CHECK(report.stall_cycles == 0);
}

TEST_CASE("buffering never hurts") {
  const LayerSpec layer{"l", 4, 4, 32, 32, 3, 3};
  const uint64_t T = 32 * 32 * 1 * 4;  // par_in=4, par_out=1
  const auto trace = bernoulli(layer, 4, T, 0.5, 21);
  uint64_t prev = UINT64_MAX;
  for (uint32_t w : {0u, 1u, 2u, 4u, 8u, 16u, 32u, 64u}) {
    const auto report = simulate_layer(layer, LayerConfig{4, 1, 1, w}, trace);
    CHECK(report.measured_cycles <= prev);
    prev = report.measured_cycles;
  }
}

TEST_CASE("measured cycles never fall below the busy time of any engine") {
  const LayerSpec layer{"l", 4, 2, 16, 16, 3, 3};
  const uint64_t T = 16 * 16 * 1 * 2;  // par_in=4, par_out=1
  const auto trace = bernoulli(layer, 4, T, 0.6, 9);
  const EngineConfig engine{3, 3, 2, false};
  uint64_t slowest = 0;
  for (uint32_t m = 0; m < 4; ++m) {
    uint64_t busy = 0;
    for (uint64_t t = 0; t < T; ++t) {
      busy += window_cycles(trace.nonzeros(m, t), engine);
    }
    slowest = std::max(slowest, busy);
  }
  for (uint32_t w : {0u, 2u, 16u, 128u}) {
    const auto report = simulate_layer(layer, LayerConfig{4, 1, 2, w}, trace);
    CHECK(report.measured_cycles >= slowest);
    CHECK(report.stall_cycles <= report.measured_cycles);
  }
}

TEST_CASE("simulation never beats the analytic model (Jensen direction)") {
  const LayerSpec layer{"l", 8, 4, 16, 16, 3, 3};
  for (double p : {0.3, 0.5, 0.65, 0.9}) {
    for (uint32_t k : {1u, 2u, 9u}) {
      for (uint32_t w : {0u, 2u, 64u}) {
        const uint64_t T = 16 * 16 * (8 / 8) * (4 / 2);
        const auto trace =
            bernoulli(layer, 8, T, p, 1000 + uint64_t(p * 100) + k + w);
        const auto report =
            simulate_layer(layer, LayerConfig{8, 2, k, w}, trace);
        CHECK(double(report.measured_cycles) >= report.model_cycles);
        CHECK(report.overhead_fraction >= 0.0);
      }
    }
  }
}

TEST_CASE("dense mode runs at the constant dense rate") {
  const LayerSpec layer{"l", 4, 4, 8, 8, 3, 3};
  const uint64_t T = 8 * 8 * 1 * 1;
  const auto trace = bernoulli(layer, 4, T, 0.7, 3);
  for (uint32_t k : {1u, 3u, 9u}) {
    const auto report =
        simulate_layer(layer, LayerConfig{4, 4, k, 8}, trace, true);
    const uint64_t per_window = (9 + k - 1) / k;
    CHECK(report.measured_cycles == per_window * T);
    CHECK(report.stall_cycles == 0);
  }
}

TEST_CASE("overhead decreases with buffer depth and tracks the metric") {
  const LayerSpec layer{"l", 8, 8, 64, 64, 3, 3};
  const uint64_t T = 64 * 64 * 1 * 1;  // par_in=8, par_out=8
  const auto trace = bernoulli(layer, 8, T, 0.5, 42);

  std::vector<double> rho;
  std::vector<double> overhead;
  for (uint32_t w : {2u, 4u, 8u, 16u, 32u, 64u, 128u}) {
    rho.push_back(back_pressure_metric(trace, w));
    const auto report = simulate_layer(layer, LayerConfig{8, 8, 1, w}, trace);
    overhead.push_back(report.overhead_fraction);
  }
  for (size_t i = 1; i < overhead.size(); ++i) {
    CHECK(overhead[i] <= overhead[i - 1]);
  }
  CHECK(spearman(rho, overhead) >= 0.9);
}

TEST_CASE("short traces tile cyclically") {
  const LayerSpec layer{"l", 4, 4, 8, 8, 3, 3};
  const uint64_t T = 8 * 8 * 2 * 2;  // par_in = par_out = 2
  const auto one_period = bernoulli(layer, 2, 64, 0.5, 8);

  // The same windows repeated explicitly must give identical results.
  SparsityTrace tiled("tiled", 9, 2, T);
  for (uint32_t m = 0; m < 2; ++m) {
    for (uint64_t t = 0; t < T; ++t) {
      for (uint32_t i = 0; i < 9; ++i) {
        tiled.set_bit(m, t, i, one_period.bit(m, t % 64, i));
      }
    }
  }
  const auto config = LayerConfig{2, 2, 1, 4};
  const auto from_short = simulate_layer(layer, config, one_period);
  const auto from_full = simulate_layer(layer, config, tiled);
  CHECK(from_short.measured_cycles == from_full.measured_cycles);
  CHECK(from_short.model_cycles == doctest::Approx(from_full.model_cycles));
}

TEST_CASE("simulation is deterministic") {
  const LayerSpec layer{"l", 8, 4, 16, 16, 3, 3};
  const uint64_t T = 16 * 16 * 1 * 2;
  const auto trace = bernoulli(layer, 8, T, 0.45, 77);
  const auto a = simulate_layer(layer, LayerConfig{8, 2, 2, 8}, trace);
  const auto b = simulate_layer(layer, LayerConfig{8, 2, 2, 8}, trace);
  CHECK(a.measured_cycles == b.measured_cycles);
  CHECK(a.stall_cycles == b.stall_cycles);
  CHECK(a.model_cycles == b.model_cycles);
}

TEST_CASE("input contract violations are rejected") {
  const LayerSpec layer{"l", 4, 4, 8, 8, 3, 3};
  const auto trace = bernoulli(layer, 2, 64, 0.5, 1);
  CHECK_THROWS_AS(simulate_layer(layer, LayerConfig{4, 1, 1, 0}, trace),
                  Error);  // stream count != par_in
  const auto wrong_window = generate_synthetic_trace(
      LayerSpec{"w", 4, 4, 8, 8, 2, 2}, 2, 64,
      SparsityModel::iid_bernoulli(0.5), 1);
  CHECK_THROWS_AS(simulate_layer(layer, LayerConfig{2, 1, 1, 0}, wrong_window),
                  Error);
}

TEST_CASE("network simulation: slowest layer sets the rate") {
  NetworkSpec net;
  net.batch_size = 1;
  net.layers.push_back({"a", 4, 4, 8, 8, 3, 3});
  const auto trace_a = bernoulli(net.layers[0], 2, 8 * 8 * 2 * 2, 0.5, 5);

  // Single layer: throughput is 1/measured.
  std::vector<LayerConfig> configs{{2, 2, 2, 4}};
  std::vector<SparsityTrace> traces{trace_a};
  const auto single = simulate_network(net, configs, traces);
  CHECK(single.throughput ==
        doctest::Approx(1.0 / double(single.reports[0].measured_cycles)));

  // Two identical layers: unchanged throughput.
  net.layers.push_back(net.layers[0]);
  net.layers[1].name = "b";
  configs.push_back(configs[0]);
  traces.push_back(trace_a);
  const auto dual = simulate_network(net, configs, traces);
  CHECK(dual.throughput == doctest::Approx(single.throughput));
  CHECK(dual.reports[0].measured_cycles == dual.reports[1].measured_cycles);

  // Add an under-provisioned layer: it becomes the bottleneck.
  net.layers.push_back({"c", 8, 8, 8, 8, 3, 3});
  configs.push_back({1, 1, 1, 0});
  traces.push_back(bernoulli(net.layers[2], 1, 512, 0.2, 6));
  const auto triple = simulate_network(net, configs, traces);
  const uint64_t slowest = std::max({triple.reports[0].measured_cycles,
                                     triple.reports[1].measured_cycles,
                                     triple.reports[2].measured_cycles});
  CHECK(slowest == triple.reports[2].measured_cycles);
  CHECK(triple.throughput == doctest::Approx(1.0 / double(slowest)));

  configs.pop_back();
  CHECK_THROWS_AS(simulate_network(net, configs, traces), Error);
}
