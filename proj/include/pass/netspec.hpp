#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pass/error.hpp"

namespace pass {

/// Shape of one convolutional layer. Output spatial dimensions are given
/// directly; stride/padding arithmetic happens upstream of this tool.
struct LayerSpec {
  std::string name;
  uint32_t c_in = 1;   // input channels
  uint32_t c_out = 1;  // output channels
  uint32_t h_out = 1;  // output height, pixels
  uint32_t w_out = 1;  // output width, pixels
  uint32_t k_x = 1;    // kernel width
  uint32_t k_y = 1;    // kernel height

  uint32_t kernel_volume() const { return k_x * k_y; }
  bool operator==(const LayerSpec&) const = default;
};

/// Ordered list of conv layers forming the streaming pipeline.
struct NetworkSpec {
  std::vector<LayerSpec> layers;
  uint32_t batch_size = 1;

  bool operator==(const NetworkSpec&) const = default;
};

/// Hard caps on the two resource axes. Any design exceeding either is
/// infeasible.
struct ResourceBudget {
  uint64_t dsp = 0;     // MAC units available
  uint64_t lutram = 0;  // buffer memory units available
};

/// Dense multiply-accumulate count for one image through the layer:
/// H_O * W_O * C_I * C_O * K_x * K_y.
uint64_t layer_workload(const LayerSpec& layer);

/// Throw Error naming the layer and field on any invariant violation.
void validate(const LayerSpec& layer);
void validate(const NetworkSpec& net);

NetworkSpec load_network(const std::filesystem::path& path);
void save_network(const NetworkSpec& net, const std::filesystem::path& path);

/// Parse from JSON text; `context` names the source in error messages.
NetworkSpec parse_network(const std::string& text, const std::string& context);
std::string network_to_json(const NetworkSpec& net);

ResourceBudget load_budget(const std::filesystem::path& path);

}  // namespace pass
