#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pass/analytic.hpp"
#include "pass/netspec.hpp"
#include "pass/trace.hpp"

namespace pass {

struct DesignPoint {
  std::vector<LayerConfig> configs;
  double objective = 0.0;     // min-layer throughput, images per cycle
  uint64_t dsp_total = 0;
  uint64_t lutram_total = 0;
  bool feasible = false;
};

/// Geometric cooling schedule. initial_temperature <= 0 calibrates from a
/// 100-move probe so roughly 80% of uphill moves are accepted;
/// min_temperature <= 0 defaults to 1e-4 of the initial temperature.
struct AnnealSchedule {
  double initial_temperature = 0.0;
  double cooling_rate = 0.97;
  uint32_t iterations_per_temperature = 100;
  double min_temperature = 0.0;
  uint64_t seed = 1;
};

struct AnnealLogEntry {
  uint64_t iteration = 0;
  double temperature = 0.0;
  double objective = 0.0;  // current state after the accept/reject decision
  bool accepted = false;
};

/// LUTRAM cost of depth-w buffers for `streams` parallel streams: a fixed
/// handshake cost plus one 32-deep step per started group of 32 windows,
/// 9 units per stream each (288 per 32-stream group).
uint64_t buffer_lutram_cost(uint32_t depth, uint32_t streams);

/// Baseline allocator: start minimal, repeatedly give the bottleneck layer
/// its cheapest legal upgrade until the budget is exhausted.
DesignPoint greedy_allocate(const NetworkSpec& net,
                            const std::vector<SparsityStats>& stats,
                            const ResourceBudget& budget,
                            ThroughputModel model = ThroughputModel::kLinear);

/// Simulated-annealing MAC allocation maximizing the min-layer throughput
/// under the DSP budget (buffer handshake cost counts against LUTRAM).
/// Moves step one variable of one random layer to an adjacent legal value
/// (divisor ladder for N_I/N_O, +-1 for macs); infeasible candidates are
/// rejected outright. The chain is seeded from the greedy baseline, so the
/// result never falls below it. Deterministic for a fixed seed.
/// Throws Error if even the all-ones design exceeds the budget.
DesignPoint allocate_macs(const NetworkSpec& net,
                          const std::vector<SparsityStats>& stats,
                          const ResourceBudget& budget,
                          const AnnealSchedule& schedule,
                          ThroughputModel model = ThroughputModel::kLinear,
                          std::vector<AnnealLogEntry>* log = nullptr);

struct BufferSizing {
  uint32_t depth = 0;
  bool cap_exceeded = false;   // stopping-condition depth did not fit the cap
  bool w_max_reduced = false;  // trace shorter than the requested sweep
};

/// Pick the smallest depth in the doubling ladder {2,4,...,w_max} at which
/// the back-pressure metric has stopped improving by more than `epsilon`
/// relative to its depth-2 value, then clip to the largest depth whose
/// LUTRAM cost fits `lutram_cap`. cost_streams 0 uses the trace's stream
/// count for costing.
BufferSizing size_buffers(const SparsityTrace& trace, uint64_t lutram_cap,
                          double epsilon, uint32_t w_max,
                          uint32_t cost_streams = 0);

}  // namespace pass
