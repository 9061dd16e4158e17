#include "pass/engine.hpp"

#include <cmath>
#include <vector>

namespace pass {

void validate(const EngineConfig& config) {
  if (config.k_x == 0 || config.k_y == 0) {
    throw Error("engine: kernel dimensions must be >= 1");
  }
  if (config.macs < 1 || config.macs > config.kernel_volume()) {
    throw Error("engine: macs must satisfy 1 <= macs <= K_x*K_y");
  }
}

uint32_t window_cycles(uint32_t nonzeros, const EngineConfig& config) {
  validate(config);
  const uint32_t kk = config.kernel_volume();
  if (nonzeros > kk) {
    throw Error("engine: pattern has more set bits than the window size");
  }
  if (config.dense_mode) {
    return (kk + config.macs - 1) / config.macs;
  }
  if (nonzeros == 0) {
    return 1;  // an empty window still produces its output
  }
  return (nonzeros + config.macs - 1) / config.macs;
}

namespace {

EngineCycleReport report_from_histogram(const std::vector<uint64_t>& hist,
                                        uint64_t windows, uint32_t kk) {
  EngineCycleReport report;
  report.windows_processed = windows;
  for (uint32_t c = 0; c < hist.size(); ++c) {
    if (hist[c] != 0) {
      report.cycles_histogram[c] = hist[c];
      report.total_cycles += uint64_t(c) * hist[c];
    }
  }
  report.equivalent_ops_per_cycle =
      double(windows) * kk / double(report.total_cycles);
  return report;
}

void check_run_args(const SparsityTrace& trace, uint32_t stream,
                    const EngineConfig& config) {
  validate(config);
  if (stream >= trace.streams()) {
    throw Error("engine: stream index out of range");
  }
  if (trace.window_bits() != config.kernel_volume()) {
    throw Error("engine: trace window size " +
                std::to_string(trace.window_bits()) +
                " does not match K_x*K_y = " +
                std::to_string(config.kernel_volume()));
  }
}

}  // namespace

EngineCycleReport run_engine_serial(const SparsityTrace& trace,
                                    uint32_t stream,
                                    const EngineConfig& config) {
  check_run_args(trace, stream, config);
  const uint32_t kk = config.kernel_volume();
  const uint32_t max_cycles = (kk + config.macs - 1) / config.macs;
  std::vector<uint64_t> hist(max_cycles + 1, 0);
  for (uint64_t t = 0; t < trace.length(); ++t) {
    ++hist[window_cycles(trace.nonzeros(stream, t), config)];
  }
  return report_from_histogram(hist, trace.length(), kk);
}

EngineCycleReport run_engine(const SparsityTrace& trace, uint32_t stream,
                             const EngineConfig& config) {
  check_run_args(trace, stream, config);
  const uint32_t kk = config.kernel_volume();
  const uint32_t max_cycles = (kk + config.macs - 1) / config.macs;
  std::vector<uint64_t> hist(max_cycles + 1, 0);

  // Integer bin counts commute, so the merged histogram is identical for any
  // thread count and matches run_engine_serial.
#pragma omp parallel
  {
    std::vector<uint64_t> local(max_cycles + 1, 0);
#pragma omp for schedule(static) nowait
    for (int64_t t = 0; t < int64_t(trace.length()); ++t) {
      ++local[window_cycles(trace.nonzeros(stream, uint64_t(t)), config)];
    }
#pragma omp critical
    for (uint32_t c = 0; c <= max_cycles; ++c) {
      hist[c] += local[c];
    }
  }
  return report_from_histogram(hist, trace.length(), kk);
}

double expected_ops_per_cycle_oracle(uint32_t k_x, uint32_t k_y, uint32_t macs,
                                     double p_zero) {
  EngineConfig config{k_x, k_y, macs, false};
  validate(config);
  if (!(p_zero >= 0.0 && p_zero <= 1.0)) {
    throw Error("engine oracle: p_zero must lie in [0, 1]");
  }
  const uint32_t kk = config.kernel_volume();
  const double q = 1.0 - p_zero;  // per-element non-zero probability

  if (q == 0.0) {
    return double(kk);  // every window is empty and takes one cycle
  }
  if (q == 1.0) {
    return double(kk) / window_cycles(kk, config);
  }

  // E[max(1, ceil(N/macs))] with N ~ Binomial(kk, q), via log-space pmf to
  // stay stable for extreme q.
  double expected = 0.0;
  for (uint32_t n = 0; n <= kk; ++n) {
    const double log_pmf = std::lgamma(double(kk) + 1.0) -
                           std::lgamma(double(n) + 1.0) -
                           std::lgamma(double(kk - n) + 1.0) +
                           n * std::log(q) + (kk - n) * std::log1p(-q);
    expected += std::exp(log_pmf) * window_cycles(n, config);
  }
  return double(kk) / expected;
}

bool engine_reference_utilization(uint32_t macs, EngineUtilization* out) {
  static constexpr EngineUtilization kTable[8] = {
      {409, 686, 336.58700774150117}, {550, 686, 249.93751562109472},
      {688, 752, 236.96682464454972}, {802, 752, 210.92596498628984},
      {855, 848, 190.69412662090008}, {869, 880, 221.72949002217297},
      {857, 880, 224.41651705565528}, {894, 880, 235.68230025925052}};
  if (macs < 1 || macs > 8) {
    return false;
  }
  if (out) {
    *out = kTable[macs - 1];
  }
  return true;
}

}  // namespace pass
