#include "pass/pipeline.hpp"

#include <algorithm>
#include <vector>

namespace pass {

SimReport simulate_layer(const LayerSpec& layer, const LayerConfig& config,
                         const SparsityTrace& trace, bool dense_mode) {
  validate(layer);
  validate_config(layer, config);
  if (trace.streams() != config.par_in) {
    throw Error("simulate_layer: trace has " + std::to_string(trace.streams()) +
                " streams but par_in is " + std::to_string(config.par_in));
  }
  if (trace.window_bits() != layer.kernel_volume()) {
    throw Error("simulate_layer: trace window size does not match the layer kernel");
  }

  const uint32_t M = config.par_in;
  const uint64_t required = uint64_t(layer.h_out) * layer.w_out *
                            (layer.c_in / config.par_in) *
                            (layer.c_out / config.par_out);
  const uint64_t t_trace = trace.length();
  const uint32_t depth = config.buffer_depth;
  const EngineConfig engine{layer.k_x, layer.k_y, config.macs, dense_mode};

  // Window service times and zero-count prefixes per stream, so the cyclic
  // tiling of short traces costs nothing in the cycle loop.
  std::vector<std::vector<uint16_t>> cycles(M);
  std::vector<std::vector<int64_t>> zero_prefix(M);
  for (uint32_t m = 0; m < M; ++m) {
    cycles[m].resize(t_trace);
    zero_prefix[m].resize(t_trace + 1);
    zero_prefix[m][0] = 0;
    for (uint64_t t = 0; t < t_trace; ++t) {
      cycles[m][t] = uint16_t(window_cycles(trace.nonzeros(m, t), engine));
      zero_prefix[m][t + 1] = zero_prefix[m][t] + trace.zeros(m, t);
    }
  }

  std::vector<uint32_t> remaining(M, 0);   // cycles left on the current window
  std::vector<uint64_t> started(M, 0);     // windows popped from the buffer
  std::vector<uint64_t> done(M, 0);        // windows completed
  std::vector<uint64_t> busy(M, 0);        // cycles spent computing
  std::vector<uint64_t> cursor(M, 0);      // next trace index (cyclic)
  uint64_t fed = 0;                        // windows delivered by the producer
  uint64_t outputs = 0;
  uint64_t cycle = 0;
  uint64_t peak_pending = 0;
  uint64_t measured = 0;

  const uint64_t max_window = (layer.kernel_volume() + config.macs - 1) / config.macs;
  const uint64_t cycle_cap = required * (max_window + 2) + depth + M + 1024;

  auto pop_window = [&](uint32_t m) {
    remaining[m] = cycles[m][cursor[m]];
    if (++cursor[m] == t_trace) {
      cursor[m] = 0;
    }
    ++started[m];
  };

  while (outputs < required) {
    ++cycle;
    if (cycle > cycle_cap) {
      throw Error("simulate_layer: cycle cap exceeded (internal error)");
    }

    // Producer: the streams are channel folds of one upstream feature-map
    // stream, so they advance in lockstep. One window goes to every buffer
    // per cycle unless some buffer is full; with no buffers the producer
    // hands a window to all engines at once when they are all idle.
    if (depth >= 1) {
      if (fed < required) {
        bool space = true;
        for (uint32_t m = 0; m < M; ++m) {
          if (fed - started[m] >= depth) {
            space = false;
            break;
          }
        }
        if (space) {
          ++fed;
        }
      }
    } else {
      bool all_idle = true;
      for (uint32_t m = 0; m < M; ++m) {
        if (remaining[m] != 0) {
          all_idle = false;
          break;
        }
      }
      if (all_idle && fed < required) {
        ++fed;
        for (uint32_t m = 0; m < M; ++m) {
          pop_window(m);
        }
      }
    }

    // Engines: pick up the next buffered window when idle, then work one
    // cycle. An engine with an empty buffer starves.
    for (uint32_t m = 0; m < M; ++m) {
      if (remaining[m] == 0 && depth >= 1 && started[m] < fed) {
        pop_window(m);
      }
      if (remaining[m] != 0) {
        ++busy[m];
        if (--remaining[m] == 0) {
          ++done[m];
        }
      }
    }

    // Barrier: retire one output per cycle once every engine has delivered
    // its partial result for it.
    uint64_t min_done = done[0];
    for (uint32_t m = 1; m < M; ++m) {
      min_done = std::min(min_done, done[m]);
    }
    if (min_done > outputs) {
      ++outputs;
      measured = cycle;
    }
    uint64_t max_done = done[0];
    for (uint32_t m = 1; m < M; ++m) {
      max_done = std::max(max_done, done[m]);
    }
    peak_pending = std::max(peak_pending, max_done - outputs);
  }

  SimReport report;
  report.measured_cycles = measured;
  report.windows_per_engine = required;
  report.peak_pending = peak_pending;

  uint64_t slowest_busy = 0;
  for (uint32_t m = 0; m < M; ++m) {
    slowest_busy = std::max(slowest_busy, busy[m]);
  }
  report.stall_cycles = measured - slowest_busy;

  // Closed-form latency for the realized mean sparsity of the consumed
  // windows: required * max over streams of max(1, mean_nnz / macs).
  // Evaluated from the exact integer non-zero sums so that the guaranteed
  // measured >= model relation is not lost to rounding.
  double worst = double(required);
  if (dense_mode) {
    worst = double(required) * layer.kernel_volume() / config.macs;
  } else {
    const uint64_t full = required / t_trace;
    const uint64_t rem = required % t_trace;
    for (uint32_t m = 0; m < M; ++m) {
      const int64_t zeros =
          int64_t(full) * zero_prefix[m][t_trace] + zero_prefix[m][rem];
      const int64_t nonzeros =
          int64_t(required) * layer.kernel_volume() - zeros;
      worst = std::max(worst, double(nonzeros) / config.macs);
    }
  }
  report.model_cycles = worst;
  report.overhead_fraction =
      double(report.measured_cycles) / report.model_cycles - 1.0;
  return report;
}

NetworkSimResult simulate_network(const NetworkSpec& net,
                                  std::span<const LayerConfig> configs,
                                  const std::vector<SparsityTrace>& traces,
                                  bool dense_mode) {
  if (configs.size() != net.layers.size() ||
      traces.size() != net.layers.size()) {
    throw Error("simulate_network: one config and trace per layer required");
  }
  NetworkSimResult result;
  result.reports.resize(net.layers.size());

  // Exceptions must not unwind out of the parallel region; collect the first
  // failure and rethrow afterwards.
  std::string failure;
#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < int64_t(net.layers.size()); ++i) {
    try {
      result.reports[i] =
          simulate_layer(net.layers[i], configs[i], traces[i], dense_mode);
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty()) {
        failure = e.what();
      }
    }
  }
  if (!failure.empty()) {
    throw Error(failure);
  }

  uint64_t slowest = 0;
  for (const SimReport& report : result.reports) {
    slowest = std::max(slowest, report.measured_cycles);
  }
  result.throughput = double(net.batch_size) / double(slowest);
  return result;
}

}  // namespace pass
