#include "pass/netspec.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace pass {

namespace {

using nlohmann::json;

uint64_t require_uint(const json& obj, const std::string& key,
                      const std::string& where) {
  if (!obj.contains(key)) {
    throw Error(where + ": missing field '" + key + "'");
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<int64_t>() < 0) {
    throw Error(where + ": field '" + key + "' must be a non-negative integer");
  }
  return v.get<uint64_t>();
}

uint32_t require_positive(const json& obj, const std::string& key,
                          const std::string& where) {
  uint64_t v = require_uint(obj, key, where);
  if (v == 0 || v > UINT32_MAX) {
    throw Error(where + ": field '" + key + "' must be in [1, 2^32)");
  }
  return static_cast<uint32_t>(v);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

uint64_t layer_workload(const LayerSpec& layer) {
  return uint64_t(layer.h_out) * layer.w_out * layer.c_in * layer.c_out *
         layer.k_x * layer.k_y;
}

void validate(const LayerSpec& layer) {
  const std::string where = "layer '" + layer.name + "'";
  auto positive = [&](uint32_t v, const char* field) {
    if (v == 0) {
      throw Error(where + ": field '" + std::string(field) +
                  "' must be >= 1");
    }
  };
  positive(layer.c_in, "c_in");
  positive(layer.c_out, "c_out");
  positive(layer.h_out, "h_out");
  positive(layer.w_out, "w_out");
  positive(layer.k_x, "k_x");
  positive(layer.k_y, "k_y");
}

void validate(const NetworkSpec& net) {
  if (net.batch_size == 0) {
    throw Error("network: field 'batch_size' must be >= 1");
  }
  if (net.layers.empty()) {
    throw Error("network: field 'layers' must hold at least one layer");
  }
  for (const LayerSpec& layer : net.layers) {
    validate(layer);
  }
}

NetworkSpec parse_network(const std::string& text, const std::string& context) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(context + ": " + e.what());
  }
  if (!doc.is_object()) {
    throw Error(context + ": top level must be an object");
  }

  NetworkSpec net;
  net.batch_size = require_positive(doc, "batch_size", context);
  if (!doc.contains("layers") || !doc.at("layers").is_array()) {
    throw Error(context + ": field 'layers' must be an array");
  }

  size_t idx = 0;
  for (const json& entry : doc.at("layers")) {
    const std::string where = context + ": layers[" + std::to_string(idx) + "]";
    if (!entry.is_object()) {
      throw Error(where + ": must be an object");
    }
    LayerSpec layer;
    if (!entry.contains("name") || !entry.at("name").is_string()) {
      throw Error(where + ": field 'name' must be a string");
    }
    layer.name = entry.at("name").get<std::string>();
    const std::string named = where + " ('" + layer.name + "')";
    layer.c_in = require_positive(entry, "c_in", named);
    layer.c_out = require_positive(entry, "c_out", named);
    layer.h_out = require_positive(entry, "h_out", named);
    layer.w_out = require_positive(entry, "w_out", named);
    layer.k_x = require_positive(entry, "k_x", named);
    layer.k_y = require_positive(entry, "k_y", named);
    net.layers.push_back(std::move(layer));
    ++idx;
  }
  validate(net);
  return net;
}

std::string network_to_json(const NetworkSpec& net) {
  json doc;
  doc["batch_size"] = net.batch_size;
  doc["layers"] = json::array();
  for (const LayerSpec& layer : net.layers) {
    doc["layers"].push_back({{"name", layer.name},
                             {"c_in", layer.c_in},
                             {"c_out", layer.c_out},
                             {"h_out", layer.h_out},
                             {"w_out", layer.w_out},
                             {"k_x", layer.k_x},
                             {"k_y", layer.k_y}});
  }
  return doc.dump(2) + "\n";
}

NetworkSpec load_network(const std::filesystem::path& path) {
  return parse_network(read_file(path), path.string());
}

void save_network(const NetworkSpec& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << network_to_json(net);
}

ResourceBudget load_budget(const std::filesystem::path& path) {
  const std::string context = path.string();
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(context + ": " + e.what());
  }
  if (!doc.is_object()) {
    throw Error(context + ": top level must be an object");
  }
  ResourceBudget budget;
  budget.dsp = require_uint(doc, "dsp", context);
  budget.lutram = require_uint(doc, "lutram", context);
  return budget;
}

}  // namespace pass
