#include "pass/analytic.hpp"

#include <algorithm>
#include <cmath>

#include "pass/engine.hpp"

namespace pass {

void validate_config(const LayerSpec& layer, const LayerConfig& config) {
  const std::string where = "layer '" + layer.name + "' config";
  if (config.par_in == 0 || layer.c_in % config.par_in != 0) {
    throw Error(where + ": par_in must divide c_in (" +
                std::to_string(config.par_in) + " vs " +
                std::to_string(layer.c_in) + ")");
  }
  if (config.par_out == 0 || layer.c_out % config.par_out != 0) {
    throw Error(where + ": par_out must divide c_out (" +
                std::to_string(config.par_out) + " vs " +
                std::to_string(layer.c_out) + ")");
  }
  if (config.macs < 1 || config.macs > layer.kernel_volume()) {
    throw Error(where + ": macs must satisfy 1 <= macs <= K_x*K_y");
  }
}

uint64_t dsp_usage(const LayerConfig& config) {
  return uint64_t(config.par_in) * config.par_out * config.macs;
}

double engine_throughput(uint32_t macs, double mean_sparsity, uint32_t k_x,
                         uint32_t k_y) {
  const double kk = double(k_x) * k_y;
  const double nonzero_work = (1.0 - mean_sparsity) * kk;
  if (nonzero_work <= double(macs)) {
    return 1.0;  // covers the mean_sparsity == 1 limit as well
  }
  return double(macs) / nonzero_work;
}

double engine_throughput_exact(uint32_t macs, double mean_sparsity,
                               uint32_t k_x, uint32_t k_y) {
  return expected_ops_per_cycle_oracle(k_x, k_y, macs, mean_sparsity) /
         (double(k_x) * k_y);
}

std::vector<double> branch_means(std::span<const double> stream_means,
                                 uint32_t par_in) {
  if (stream_means.empty()) {
    throw Error("branch_means: no stream means given");
  }
  const uint32_t M = uint32_t(stream_means.size());
  std::vector<double> out(par_in, 0.0);
  if (par_in <= M) {
    // Each branch serves the streams assigned to it round-robin.
    for (uint32_t b = 0; b < par_in; ++b) {
      double sum = 0.0;
      uint32_t count = 0;
      for (uint32_t m = b; m < M; m += par_in) {
        sum += stream_means[m];
        ++count;
      }
      out[b] = sum / count;
    }
  } else {
    for (uint32_t b = 0; b < par_in; ++b) {
      out[b] = stream_means[b % M];
    }
  }
  return out;
}

double layer_latency(const LayerSpec& layer, const LayerConfig& config,
                     std::span<const double> stream_means,
                     ThroughputModel model) {
  validate_config(layer, config);
  const uint64_t engines = uint64_t(config.par_in) * config.par_out;

  std::vector<double> per_engine;
  if (stream_means.size() == engines) {
    per_engine.assign(stream_means.begin(), stream_means.end());
  } else {
    // Per-input-stream statistics: fold onto the N_I branches and replicate
    // across the N_O columns, which all consume the same streams.
    per_engine = branch_means(stream_means, config.par_in);
  }

  double worst = 0.0;
  for (double mean : per_engine) {
    const double theta =
        model == ThroughputModel::kLinear
            ? engine_throughput(config.macs, mean, layer.k_x, layer.k_y)
            : engine_throughput_exact(config.macs, mean, layer.k_x, layer.k_y);
    worst = std::max(worst, 1.0 / theta);
  }

  const double folds = (double(layer.c_in) / config.par_in) *
                       (double(layer.c_out) / config.par_out);
  return double(layer.h_out) * layer.w_out * folds * worst;
}

double network_objective(const NetworkSpec& net,
                         std::span<const LayerConfig> configs,
                         const std::vector<SparsityStats>& stats,
                         ThroughputModel model) {
  if (configs.size() != net.layers.size() || stats.size() != net.layers.size()) {
    throw Error("network_objective: one config and stats entry per layer required");
  }
  double objective = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const double latency =
        layer_latency(net.layers[i], configs[i], stats[i].per_stream_mean, model);
    objective = std::min(objective, double(net.batch_size) / latency);
  }
  return objective;
}

}  // namespace pass
