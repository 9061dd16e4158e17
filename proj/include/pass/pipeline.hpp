#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pass/analytic.hpp"
#include "pass/engine.hpp"
#include "pass/netspec.hpp"
#include "pass/trace.hpp"

namespace pass {

struct SimReport {
  uint64_t measured_cycles = 0;
  /// Closed-form estimate for the same workload and the same realized
  /// per-stream mean sparsity (linear throughput model).
  double model_cycles = 0.0;
  /// measured - busy cycles of the slowest engine: time lost to barrier
  /// back-pressure and input starvation.
  uint64_t stall_cycles = 0;
  double overhead_fraction = 0.0;  // measured / model - 1
  uint64_t windows_per_engine = 0; // folded workload per stream
  /// Peak count of finished partials waiting at the barrier (diagnostic;
  /// bounded by buffer_depth + 2).
  uint64_t peak_pending = 0;
};

/// Cycle-level simulation of one pipelined conv layer: N_I engines fed
/// through per-stream input buffers from a lockstep producer, with a
/// synchronisation barrier that retires one output per cycle once every
/// engine has delivered its partial for that window.
///
/// The producer advances all streams together (they are channel folds of one
/// feature-map stream): each cycle it pushes the next window into every
/// buffer unless some buffer is full. buffer_depth 0 is a direct handshake:
/// all engines accept window j simultaneously when idle. The N_O engine
/// columns see identical inputs and therefore identical timing, so a single
/// column is simulated; the column count only folds the workload.
///
/// Each engine processes T = H_O*W_O*(C_I/N_I)*(C_O/N_O) windows, tiling the
/// trace cyclically when it is shorter. Deterministic for fixed inputs.
SimReport simulate_layer(const LayerSpec& layer, const LayerConfig& config,
                         const SparsityTrace& trace, bool dense_mode = false);

struct NetworkSimResult {
  std::vector<SimReport> reports;
  double throughput = 0.0;  // batch_size / max over layers of measured cycles
};

/// Layers are simulated independently against their own traces; the network
/// rate is set by the slowest layer (steady-state pipeline, inter-layer skew
/// not modeled).
NetworkSimResult simulate_network(const NetworkSpec& net,
                                  std::span<const LayerConfig> configs,
                                  const std::vector<SparsityTrace>& traces,
                                  bool dense_mode = false);

}  // namespace pass
