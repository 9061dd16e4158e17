#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pass/netspec.hpp"
#include "pass/trace.hpp"

namespace pass {

/// Per-layer hardware choice: input/output channel parallelism, MACs per
/// engine, and input buffer depth in windows (0 = direct handshake).
struct LayerConfig {
  uint32_t par_in = 1;        // N_I, must divide the layer's c_in
  uint32_t par_out = 1;       // N_O, must divide the layer's c_out
  uint32_t macs = 1;          // k per engine, 1 <= macs <= K_x*K_y
  uint32_t buffer_depth = 0;  // w, windows buffered per input stream

  bool operator==(const LayerConfig&) const = default;
};

void validate_config(const LayerSpec& layer, const LayerConfig& config);

/// Which engine throughput expression drives latency estimates: the linear
/// mean-sparsity model, or the exact binomial expectation (which keeps the
/// ceil and the one-cycle floor).
enum class ThroughputModel { kLinear, kExact };

/// MAC units consumed by one layer: N_I * N_O * macs.
uint64_t dsp_usage(const LayerConfig& config);

/// Average windows per cycle of one engine under the linear model:
/// min(1, macs / ((1 - mean_sparsity) * K_x * K_y)). Fully sparse input
/// saturates at 1.
double engine_throughput(uint32_t macs, double mean_sparsity, uint32_t k_x,
                         uint32_t k_y);

/// Exact-expectation counterpart (binomial oracle divided by K_x*K_y).
double engine_throughput_exact(uint32_t macs, double mean_sparsity,
                               uint32_t k_x, uint32_t k_y);

/// Fold measured per-stream sparsity means onto par_in branches: with fewer
/// branches than streams each branch averages its round-robin share, with
/// more branches the means are replicated cyclically.
std::vector<double> branch_means(std::span<const double> stream_means,
                                 uint32_t par_in);

/// Average layer latency in cycles:
/// H_O * W_O * (C_I/N_I) * (C_O/N_O) * max over engines of 1/theta.
/// `stream_means` may hold N_I*N_O per-engine values, or per-stream values
/// that are folded via branch_means and replicated across the N_O columns.
double layer_latency(const LayerSpec& layer, const LayerConfig& config,
                     std::span<const double> stream_means,
                     ThroughputModel model = ThroughputModel::kLinear);

/// min over layers of batch_size / layer latency, in images per cycle.
double network_objective(const NetworkSpec& net,
                         std::span<const LayerConfig> configs,
                         const std::vector<SparsityStats>& stats,
                         ThroughputModel model = ThroughputModel::kLinear);

}  // namespace pass
