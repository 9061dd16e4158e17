#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "pass/trace.hpp"

using namespace pass;

namespace {

const LayerSpec k3x3{"l3x3", 32, 32, 8, 8, 3, 3};
const LayerSpec k4x5{"l4x5", 32, 32, 8, 8, 4, 5};  // window of 20 elements

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "pass_trace_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Trace where window (m, t) has exactly zeros[t % zeros.size()] zero elements
// on every stream.
SparsityTrace patterned_trace(uint32_t window_bits, uint32_t streams,
                              const std::vector<uint32_t>& zeros_per_window) {
  SparsityTrace trace("pattern", window_bits, streams,
                      zeros_per_window.size());
  for (uint32_t m = 0; m < streams; ++m) {
    for (uint64_t t = 0; t < zeros_per_window.size(); ++t) {
      for (uint32_t i = zeros_per_window[t]; i < window_bits; ++i) {
        trace.set_bit(m, t, i, true);
      }
    }
  }
  return trace;
}

}  // namespace

TEST_CASE("instantaneous sparsity is the zero fraction of one window") {
  SparsityTrace trace("t", 9, 1, 3);
  // t=0 all-zero, t=1 all-ones, t=2 three of nine set.
  for (uint32_t i = 0; i < 9; ++i) {
    trace.set_bit(0, 1, i, true);
  }
  for (uint32_t i : {0u, 4u, 8u}) {
    trace.set_bit(0, 2, i, true);
  }
  CHECK(instantaneous_sparsity(trace, 0, 0) == 1.0);
  CHECK(instantaneous_sparsity(trace, 0, 1) == 0.0);
  CHECK(instantaneous_sparsity(trace, 0, 2) == doctest::Approx(6.0 / 9.0));
  CHECK_THROWS_AS(instantaneous_sparsity(trace, 0, 3), Error);
  CHECK_THROWS_AS(instantaneous_sparsity(trace, 1, 0), Error);
}

TEST_CASE("stats: alternating fully-sparse/fully-dense stream") {
  std::vector<uint32_t> zeros;
  for (int i = 0; i < 50; ++i) {
    zeros.push_back(9);
    zeros.push_back(0);
  }
  const auto trace = patterned_trace(9, 1, zeros);
  const SparsityStats stats = compute_stats(trace);
  CHECK(stats.per_stream_mean[0] == doctest::Approx(0.5));
  CHECK(stats.per_stream_variance[0] == doctest::Approx(0.25));
  CHECK(stats.global_mean == doctest::Approx(0.5));
}

TEST_CASE("stats: constant stream has zero variance") {
  // 13 zeros in a 20-element window gives sparsity 0.65 exactly.
  const auto trace = patterned_trace(20, 2, std::vector<uint32_t>(64, 13));
  const SparsityStats stats = compute_stats(trace);
  for (uint32_t m = 0; m < 2; ++m) {
    CHECK(stats.per_stream_mean[m] == doctest::Approx(0.65));
    CHECK(stats.per_stream_variance[m] == doctest::Approx(0.0));
  }
}

TEST_CASE("stats: Bernoulli trace converges to its target mean") {
  const auto trace = generate_synthetic_trace(
      k3x3, 2, 100000, SparsityModel::iid_bernoulli(0.57), 7);
  const SparsityStats stats = compute_stats(trace);
  for (uint32_t m = 0; m < 2; ++m) {
    CHECK(stats.per_stream_mean[m] == doctest::Approx(0.57).epsilon(0.018));
  }
}

TEST_CASE("parallel stats match the serial reference bit-for-bit") {
  const auto trace = generate_synthetic_trace(
      k3x3, 4, 20000, SparsityModel::markov_bursty(0.4, 32), 11);
  const SparsityStats par = compute_stats(trace);
  const SparsityStats ser = compute_stats_serial(trace);
  for (uint32_t m = 0; m < 4; ++m) {
    CHECK(par.per_stream_mean[m] == ser.per_stream_mean[m]);
    CHECK(par.per_stream_variance[m] == ser.per_stream_variance[m]);
  }
  CHECK(par.global_mean == ser.global_mean);
}

TEST_CASE("moving average: identity, full-series, and hand-computed windows") {
  const auto trace = patterned_trace(9, 1, {9, 0, 9, 0});

  const auto raw = moving_average(trace, 0, 1);
  REQUIRE(raw.size() == 4);
  CHECK(raw == std::vector<double>{1.0, 0.0, 1.0, 0.0});

  const auto full = moving_average(trace, 0, 4);
  REQUIRE(full.size() == 1);
  CHECK(full[0] == compute_stats(trace).per_stream_mean[0]);

  const auto pairs = moving_average(trace, 0, 2);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs == std::vector<double>{0.5, 0.5, 0.5});

  CHECK_THROWS_AS(moving_average(trace, 0, 5), Error);
}

TEST_CASE("moving average stays in [0,1] and matches the mean at w=T") {
  const auto trace = generate_synthetic_trace(
      k3x3, 3, 512, SparsityModel::iid_bernoulli(0.3), 5);
  const auto stats = compute_stats(trace);
  for (uint32_t m = 0; m < 3; ++m) {
    for (uint64_t w : {1, 7, 64, 512}) {
      for (double psi : moving_average(trace, m, w)) {
        CHECK(psi >= 0.0);
        CHECK(psi <= 1.0);
      }
    }
    const auto full = moving_average(trace, m, 512);
    CHECK(full[0] == stats.per_stream_mean[m]);
  }
}

TEST_CASE("back pressure of constant streams is exactly zero") {
  // Streams with constant sparsity 0.3 and 0.7 on a 20-element window.
  SparsityTrace trace("const", 20, 2, 128);
  for (uint64_t t = 0; t < 128; ++t) {
    for (uint32_t i = 6; i < 20; ++i) {
      trace.set_bit(0, t, i, true);  // 6 zeros: s = 0.3
    }
    for (uint32_t i = 14; i < 20; ++i) {
      trace.set_bit(1, t, i, true);  // 14 zeros: s = 0.7
    }
  }
  for (uint64_t w : {2, 4, 16, 64}) {
    CHECK(back_pressure_metric(trace, w) == 0.0);
  }
}

TEST_CASE("back pressure of identical streams is exactly zero") {
  const auto one = generate_synthetic_trace(
      k3x3, 1, 256, SparsityModel::iid_bernoulli(0.5), 3);
  SparsityTrace two("dup", 9, 2, 256);
  for (uint64_t t = 0; t < 256; ++t) {
    for (uint32_t i = 0; i < 9; ++i) {
      const bool b = one.bit(0, t, i);
      two.set_bit(0, t, i, b);
      two.set_bit(1, t, i, b);
    }
  }
  for (uint64_t w : {2, 8, 32, 128}) {
    CHECK(back_pressure_metric(two, w) == 0.0);
  }
}

TEST_CASE("back pressure decreases with window size on i.i.d. streams") {
  const auto trace = generate_synthetic_trace(
      k3x3, 2, 100000, SparsityModel::iid_bernoulli(0.5), 17);
  const double rho2 = back_pressure_metric(trace, 2);
  const double rho64 = back_pressure_metric(trace, 64);
  CHECK(rho2 > rho64);
  CHECK(rho64 > 0.0);

  // Non-increasing on average along the quadrupling ladder.
  for (uint64_t w : {2, 8, 32, 128}) {
    CHECK(back_pressure_metric(trace, w) >=
          back_pressure_metric(trace, 4 * w) - 0.02);
  }

  // Vanishes as the window approaches the full series.
  CHECK(back_pressure_metric(trace, trace.length() / 2) < 0.05);
}

TEST_CASE("back pressure requires two streams and w <= T") {
  const auto trace = generate_synthetic_trace(
      k3x3, 1, 64, SparsityModel::iid_bernoulli(0.5), 1);
  CHECK_THROWS_AS(back_pressure_metric(trace, 2), Error);
  const auto two = generate_synthetic_trace(
      k3x3, 2, 64, SparsityModel::iid_bernoulli(0.5), 1);
  CHECK_THROWS_AS(back_pressure_metric(two, 65), Error);
}

TEST_CASE("parallel back pressure matches the serial reference bit-for-bit") {
  const auto trace = generate_synthetic_trace(
      k3x3, 8, 30000, SparsityModel::markov_bursty(0.6, 24), 23);
  for (uint64_t w : {2, 16, 128}) {
    CHECK(back_pressure_metric(trace, w) ==
          back_pressure_metric_serial(trace, w));
  }
}

TEST_CASE("synthetic generator: degenerate models") {
  const auto all_zero = generate_synthetic_trace(
      k3x3, 2, 32, SparsityModel::constant(1.0), 1);
  for (uint64_t t = 0; t < 32; ++t) {
    CHECK(all_zero.nonzeros(0, t) == 0);
    CHECK(all_zero.nonzeros(1, t) == 0);
  }

  const auto dense = generate_synthetic_trace(
      k3x3, 2, 32, SparsityModel::iid_bernoulli(0.0), 1);
  for (uint64_t t = 0; t < 32; ++t) {
    CHECK(dense.nonzeros(0, t) == 9);
  }
}

TEST_CASE("synthetic generator: Bernoulli self-check at the VGG16 mean") {
  const auto trace = generate_synthetic_trace(
      k3x3, 1, 100000, SparsityModel::iid_bernoulli(0.65), 2024);
  const SparsityStats stats = compute_stats(trace);
  CHECK(stats.per_stream_mean[0] == doctest::Approx(0.65).epsilon(0.016));
}

TEST_CASE("synthetic generator is seed-deterministic") {
  const auto model = SparsityModel::markov_bursty(0.5, 8);
  const auto a = generate_synthetic_trace(k4x5, 3, 128, model, 99);
  const auto b = generate_synthetic_trace(k4x5, 3, 128, model, 99);
  const auto c = generate_synthetic_trace(k4x5, 3, 128, model, 100);
  bool identical = true;
  bool differs = false;
  for (uint32_t m = 0; m < 3; ++m) {
    for (uint64_t t = 0; t < 128; ++t) {
      identical &= a.nonzeros(m, t) == b.nonzeros(m, t);
      differs |= a.nonzeros(m, t) != c.nonzeros(m, t);
    }
  }
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("model parameter validation") {
  CHECK_THROWS_AS(SparsityModel::iid_bernoulli(1.5), Error);
  CHECK_THROWS_AS(SparsityModel::constant(-0.1), Error);
  CHECK_THROWS_AS(SparsityModel::markov_bursty(0.5, 0), Error);
}

TEST_CASE("binary and CSV containers round-trip") {
  const auto trace = generate_synthetic_trace(
      k4x5, 3, 200, SparsityModel::iid_bernoulli(0.4), 31);

  for (bool csv : {false, true}) {
    const auto path = temp_file(csv ? "t.csv" : "t.bin");
    if (csv) {
      write_trace_csv(trace, path);
    } else {
      write_trace(trace, path);
    }
    const SparsityTrace loaded = load_trace(path);
    CHECK(loaded.layer() == trace.layer());
    CHECK(loaded.window_bits() == trace.window_bits());
    CHECK(loaded.streams() == trace.streams());
    CHECK(loaded.length() == trace.length());
    bool equal = true;
    for (uint32_t m = 0; m < 3; ++m) {
      for (uint64_t t = 0; t < 200; ++t) {
        for (uint32_t i = 0; i < 20; ++i) {
          equal &= loaded.bit(m, t, i) == trace.bit(m, t, i);
        }
      }
    }
    CHECK(equal);
  }
}

TEST_CASE("corrupt trace files are rejected") {
  const auto empty = temp_file("empty.csv");
  std::ofstream(empty).close();
  CHECK_THROWS_AS(load_trace(empty), Error);

  const auto bad_mask = temp_file("bad_mask.csv");
  std::ofstream(bad_mask) << "stream,t,mask\n0,0,10x\n";
  CHECK_THROWS_AS(load_trace(bad_mask), Error);

  const auto missing_row = temp_file("missing.csv");
  std::ofstream(missing_row) << "stream,t,mask\n0,0,101\n0,2,111\n";
  CHECK_THROWS_AS(load_trace(missing_row), Error);

  const auto truncated = temp_file("trunc.bin");
  write_trace(generate_synthetic_trace(k3x3, 2, 50,
                                       SparsityModel::iid_bernoulli(0.5), 1),
              truncated);
  auto bytes = std::filesystem::file_size(truncated);
  std::filesystem::resize_file(truncated, bytes - 20);
  CHECK_THROWS_AS(load_trace(truncated), Error);
}

TEST_CASE("adapt_streams preserves the sparsity mix") {
  const auto trace = generate_synthetic_trace(
      k3x3, 4, 4096, SparsityModel::iid_bernoulli(0.5), 13);
  const auto wide = adapt_streams(trace, 8);
  CHECK(wide.streams() == 8);
  CHECK(wide.length() == trace.length());
  const auto narrow = adapt_streams(trace, 2);
  CHECK(narrow.streams() == 2);

  const double src = compute_stats(trace).global_mean;
  CHECK(compute_stats(wide).global_mean == doctest::Approx(src).epsilon(0.02));
  CHECK(compute_stats(narrow).global_mean ==
        doctest::Approx(src).epsilon(0.02));

  // Replicated streams must not be pointwise identical (phase offset).
  bool differs = false;
  for (uint64_t t = 0; t < trace.length() && !differs; ++t) {
    differs = wide.nonzeros(0, t) != wide.nonzeros(4, t);
  }
  CHECK(differs);
}
