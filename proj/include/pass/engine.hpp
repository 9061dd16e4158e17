#pragma once

#include <cstdint>
#include <map>

#include "pass/trace.hpp"

namespace pass {

/// One sparse matrix-vector engine: a non-zero check per kernel element, a
/// crossbar that squeezes the K_x*K_y candidate products onto `macs` MAC
/// units, and multi-cycle accumulation when more than `macs` elements are
/// non-zero. dense_mode disables zero skipping and models the baseline
/// engine (a macs-wide dense dot product).
struct EngineConfig {
  uint32_t k_x = 3;
  uint32_t k_y = 3;
  uint32_t macs = 1;        // 1 <= macs <= k_x * k_y
  bool dense_mode = false;

  uint32_t kernel_volume() const { return k_x * k_y; }
};

void validate(const EngineConfig& config);

struct EngineCycleReport {
  uint64_t windows_processed = 0;
  uint64_t total_cycles = 0;
  /// windows_processed * K_x * K_y / total_cycles: dense-equivalent work per
  /// cycle, counting skipped zeros as completed operations.
  double equivalent_ops_per_cycle = 0.0;
  std::map<uint32_t, uint64_t> cycles_histogram;  // per-window cycles -> count
};

/// Cycles to process one window with `nonzeros` set bits. Sparse mode:
/// max(1, ceil(nonzeros / macs)) -- an all-zero window still takes one output
/// cycle. Dense mode: ceil(K_x*K_y / macs) regardless of the pattern.
uint32_t window_cycles(uint32_t nonzeros, const EngineConfig& config);

/// Steady-state throughput over one trace stream; pipeline fill/drain is not
/// counted. Pure and deterministic; the parallel version accumulates integer
/// histograms, so its result is independent of thread count and identical to
/// run_engine_serial.
EngineCycleReport run_engine(const SparsityTrace& trace, uint32_t stream,
                             const EngineConfig& config);
EngineCycleReport run_engine_serial(const SparsityTrace& trace,
                                    uint32_t stream,
                                    const EngineConfig& config);

/// Closed-form expectation for i.i.d. element sparsity:
/// K_x*K_y / E[max(1, ceil(N / macs))] with N ~ Binomial(K_x*K_y, 1 - p_zero),
/// by exact summation over N.
double expected_ops_per_cycle_oracle(uint32_t k_x, uint32_t k_y, uint32_t macs,
                                     double p_zero);

/// Published synthesis characteristics of the reference 3x3 engine on a
/// Zynq UltraScale+ fabric, per MAC count. A static lookup for reporting;
/// nothing in the cycle model depends on it.
struct EngineUtilization {
  uint32_t luts = 0;
  uint32_t ffs = 0;
  double freq_mhz = 0.0;
};

/// Valid for macs in [1, 8]; returns false otherwise.
bool engine_reference_utilization(uint32_t macs, EngineUtilization* out);

}  // namespace pass
