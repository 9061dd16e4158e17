// pass: profiling, simulation and design-space exploration for
// sparsity-aware streaming CNN accelerators.

#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pass/analytic.hpp"
#include "pass/dse.hpp"
#include "pass/engine.hpp"
#include "pass/netspec.hpp"
#include "pass/pipeline.hpp"
#include "pass/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pass;

namespace {

constexpr int kExitError = 1;
constexpr int kExitInfeasible = 2;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  return out;
}

void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    const json& args, uint64_t seed,
                    std::optional<double> freq_mhz) {
  json manifest;
  manifest["subcommand"] = subcommand;
  manifest["args"] = args;
  manifest["seed"] = seed;
  if (freq_mhz) {
    manifest["frequency_mhz"] = *freq_mhz;
  } else {
    manifest["frequency_mhz"] = nullptr;
  }
  auto out = open_output(out_dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

fs::path prepare_out_dir(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// profile

int cmd_profile(const std::vector<std::string>& trace_paths,
                const std::string& out, uint64_t seed) {
  const fs::path dir = prepare_out_dir(out);
  bool failed = false;
  std::vector<std::pair<std::string, SparsityTrace>> traces;
  for (const std::string& path : trace_paths) {
    try {
      traces.emplace_back(fs::path(path).stem().string(), load_trace(path));
    } catch (const std::exception& e) {
      std::cerr << "error: " << path << ": " << e.what() << "\n";
      failed = true;
    }
  }
  if (failed) {
    return kExitError;
  }

  auto stats_csv = open_output(dir / "profile.csv");
  stats_csv << "trace,stream,mean_sparsity,variance\n";
  auto rho_csv = open_output(dir / "backpressure.csv");
  rho_csv << "trace,w,rho\n";

  for (const auto& [name, trace] : traces) {
    const SparsityStats stats = compute_stats(trace);
    for (uint32_t m = 0; m < trace.streams(); ++m) {
      stats_csv << name << "," << m << "," << fmt(stats.per_stream_mean[m])
                << "," << fmt(stats.per_stream_variance[m]) << "\n";
    }
    if (trace.streams() >= 2) {
      for (uint64_t w = 2; w <= 256 && w <= trace.length(); w *= 2) {
        rho_csv << name << "," << w << "," << fmt(back_pressure_metric(trace, w))
                << "\n";
      }
    }
  }

  json args;
  args["traces"] = trace_paths;
  write_manifest(dir, "profile", args, seed, std::nullopt);
  return 0;
}

// ---------------------------------------------------------------------------
// sweep-engine

int cmd_sweep_engine(uint32_t k_x, uint32_t k_y, uint32_t k_min,
                     uint32_t k_max, double p_step, uint64_t length,
                     uint64_t seed, const std::string& out) {
  const uint32_t kk = k_x * k_y;
  if (k_min < 1 || k_max > kk || k_min > k_max) {
    throw Error("sweep-engine: MAC range must lie within [1, " +
                std::to_string(kk) + "]");
  }
  if (!(p_step > 0.0 && p_step <= 1.0)) {
    throw Error("sweep-engine: sparsity step must lie in (0, 1]");
  }
  const fs::path dir = prepare_out_dir(out);

  const uint64_t steps = uint64_t(std::llround(1.0 / p_step));
  const LayerSpec probe{"sweep", 1, 1, 1, 1, k_x, k_y};

  auto csv = open_output(dir / "sweep.csv");
  csv << "p_zero,k,ops_per_cycle_sim,ops_per_cycle_oracle\n";
  for (uint64_t i = 0; i <= steps; ++i) {
    const double p = double(i) / double(steps);
    const SparsityTrace trace = generate_synthetic_trace(
        probe, 1, length, SparsityModel::iid_bernoulli(p), seed + i);
    for (uint32_t k = k_min; k <= k_max; ++k) {
      const auto report = run_engine(trace, 0, EngineConfig{k_x, k_y, k, false});
      csv << fmt(p) << "," << k << "," << fmt(report.equivalent_ops_per_cycle)
          << "," << fmt(expected_ops_per_cycle_oracle(k_x, k_y, k, p)) << "\n";
    }
  }

  json args;
  args["k_x"] = k_x;
  args["k_y"] = k_y;
  args["k_min"] = k_min;
  args["k_max"] = k_max;
  args["p_step"] = p_step;
  args["length"] = length;
  write_manifest(dir, "sweep-engine", args, seed, std::nullopt);
  return 0;
}

// ---------------------------------------------------------------------------
// design document helpers

json design_to_json(const NetworkSpec& net, const DesignPoint& point,
                    const std::vector<SparsityStats>& stats,
                    ThroughputModel model) {
  json doc;
  doc["objective"] = point.objective;
  doc["dsp_total"] = point.dsp_total;
  doc["lutram_total"] = point.lutram_total;
  doc["feasible"] = point.feasible;
  doc["batch_size"] = net.batch_size;
  doc["throughput_model"] =
      model == ThroughputModel::kLinear ? "linear" : "exact";
  doc["layers"] = json::array();
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    const LayerConfig& config = point.configs[i];
    const double latency =
        layer_latency(layer, config, stats[i].per_stream_mean, model);
    double theta_min = 1.0;
    for (double mean : branch_means(stats[i].per_stream_mean, config.par_in)) {
      const double theta =
          model == ThroughputModel::kLinear
              ? engine_throughput(config.macs, mean, layer.k_x, layer.k_y)
              : engine_throughput_exact(config.macs, mean, layer.k_x,
                                        layer.k_y);
      theta_min = std::min(theta_min, theta);
    }
    doc["layers"].push_back(
        {{"name", layer.name},
         {"c_in", layer.c_in},
         {"c_out", layer.c_out},
         {"h_out", layer.h_out},
         {"w_out", layer.w_out},
         {"k_x", layer.k_x},
         {"k_y", layer.k_y},
         {"par_in", config.par_in},
         {"par_out", config.par_out},
         {"macs", config.macs},
         {"buffer_depth", config.buffer_depth},
         {"model_cycles", latency},
         {"theta_min", theta_min},
         {"dsp", dsp_usage(config)},
         {"lutram", buffer_lutram_cost(config.buffer_depth, config.par_in)}});
  }
  return doc;
}

std::vector<LayerConfig> configs_from_design(const json& doc,
                                             const NetworkSpec& net) {
  if (!doc.contains("layers") || !doc.at("layers").is_array() ||
      doc.at("layers").size() != net.layers.size()) {
    throw Error("design: 'layers' must list one entry per network layer");
  }
  std::vector<LayerConfig> configs;
  size_t i = 0;
  for (const json& entry : doc.at("layers")) {
    const std::string name = entry.value("name", std::string());
    if (name != net.layers[i].name) {
      throw Error("design: layer " + std::to_string(i) + " is '" + name +
                  "' but the network lists '" + net.layers[i].name + "'");
    }
    LayerConfig config;
    config.par_in = entry.at("par_in").get<uint32_t>();
    config.par_out = entry.at("par_out").get<uint32_t>();
    config.macs = entry.at("macs").get<uint32_t>();
    config.buffer_depth = entry.value("buffer_depth", 0u);
    validate_config(net.layers[i], config);
    configs.push_back(config);
    ++i;
  }
  return configs;
}

json load_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// One trace per layer, or a single trace broadcast to every layer.
std::vector<SparsityTrace> load_layer_traces(
    const std::vector<std::string>& paths, const NetworkSpec& net) {
  if (paths.size() != 1 && paths.size() != net.layers.size()) {
    throw Error("expected 1 or " + std::to_string(net.layers.size()) +
                " trace files, got " + std::to_string(paths.size()));
  }
  std::vector<SparsityTrace> traces;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const std::string& path = paths.size() == 1 ? paths[0] : paths[i];
    SparsityTrace trace = load_trace(path);
    if (trace.window_bits() != net.layers[i].kernel_volume()) {
      throw Error(path + ": window size " +
                  std::to_string(trace.window_bits()) +
                  " does not match layer '" + net.layers[i].name + "' (" +
                  std::to_string(net.layers[i].kernel_volume()) + ")");
    }
    traces.push_back(std::move(trace));
  }
  return traces;
}

std::vector<SparsityStats> stats_per_layer(
    const std::vector<SparsityTrace>& traces) {
  std::vector<SparsityStats> stats;
  stats.reserve(traces.size());
  for (const SparsityTrace& trace : traces) {
    stats.push_back(compute_stats(trace));
  }
  return stats;
}

std::vector<SparsityStats> dense_stats(const NetworkSpec& net) {
  std::vector<SparsityStats> stats(net.layers.size());
  for (auto& s : stats) {
    s.per_stream_mean = {0.0};
    s.per_stream_variance = {0.0};
    s.global_mean = 0.0;
  }
  return stats;
}

void write_sim_csv(const fs::path& path, const NetworkSpec& net,
                   std::span<const LayerConfig> configs,
                   const NetworkSimResult& result) {
  auto csv = open_output(path);
  csv << "layer,N_I,N_O,k,w,measured_cycles,model_cycles,stall_cycles,"
         "overhead_pct\n";
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const SimReport& r = result.reports[i];
    csv << net.layers[i].name << "," << configs[i].par_in << ","
        << configs[i].par_out << "," << configs[i].macs << ","
        << configs[i].buffer_depth << "," << r.measured_cycles << ","
        << fmt(r.model_cycles) << "," << r.stall_cycles << ","
        << fmt(100.0 * r.overhead_fraction) << "\n";
  }
}

NetworkSimResult simulate_with_adaptation(
    const NetworkSpec& net, std::span<const LayerConfig> configs,
    const std::vector<SparsityTrace>& traces, bool dense) {
  std::vector<SparsityTrace> adapted;
  adapted.reserve(traces.size());
  for (size_t i = 0; i < traces.size(); ++i) {
    adapted.push_back(traces[i].streams() == configs[i].par_in
                          ? traces[i]
                          : adapt_streams(traces[i], configs[i].par_in));
  }
  return simulate_network(net, configs, adapted, dense);
}

// ---------------------------------------------------------------------------
// gen-trace

int cmd_gen_trace(uint32_t k_x, uint32_t k_y, uint32_t streams,
                  uint64_t length, const std::string& model_name,
                  double p_zero, uint32_t burst, uint64_t seed,
                  const std::string& layer_name, bool csv,
                  const std::string& out_file) {
  SparsityModel model;
  if (model_name == "constant") {
    model = SparsityModel::constant(p_zero);
  } else if (model_name == "iid-bernoulli") {
    model = SparsityModel::iid_bernoulli(p_zero);
  } else if (model_name == "markov-bursty") {
    model = SparsityModel::markov_bursty(p_zero, burst);
  } else {
    throw Error("gen-trace: unknown model '" + model_name +
                "' (constant, iid-bernoulli, markov-bursty)");
  }
  const LayerSpec shape{layer_name, streams, 1, 1, 1, k_x, k_y};
  const SparsityTrace trace =
      generate_synthetic_trace(shape, streams, length, model, seed);
  if (csv) {
    write_trace_csv(trace, out_file);
  } else {
    write_trace(trace, out_file);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// model

int cmd_model(const std::string& network, const std::string& design,
              const std::vector<std::string>& trace_paths, double sparsity,
              bool exact, const std::string& out, uint64_t seed) {
  const NetworkSpec net = load_network(network);
  const json design_doc = load_json(design);
  const auto configs = configs_from_design(design_doc, net);
  const ThroughputModel model =
      exact ? ThroughputModel::kExact : ThroughputModel::kLinear;

  std::vector<SparsityStats> stats;
  if (!trace_paths.empty()) {
    stats = stats_per_layer(load_layer_traces(trace_paths, net));
  } else {
    for (size_t i = 0; i < net.layers.size(); ++i) {
      SparsityStats s;
      s.per_stream_mean = {sparsity};
      s.per_stream_variance = {0.0};
      s.global_mean = sparsity;
      stats.push_back(std::move(s));
    }
  }

  const fs::path dir = prepare_out_dir(out);
  auto csv = open_output(dir / "model.csv");
  csv << "layer,N_I,N_O,k,theta_min,model_cycles,dsp\n";
  double worst = 0.0;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const double latency = layer_latency(net.layers[i], configs[i],
                                         stats[i].per_stream_mean, model);
    double theta_min = 1.0;
    for (double mean :
         branch_means(stats[i].per_stream_mean, configs[i].par_in)) {
      const double theta =
          exact ? engine_throughput_exact(configs[i].macs, mean,
                                          net.layers[i].k_x, net.layers[i].k_y)
                : engine_throughput(configs[i].macs, mean, net.layers[i].k_x,
                                    net.layers[i].k_y);
      theta_min = std::min(theta_min, theta);
    }
    worst = std::max(worst, latency);
    csv << net.layers[i].name << "," << configs[i].par_in << ","
        << configs[i].par_out << "," << configs[i].macs << ","
        << fmt(theta_min) << "," << fmt(latency) << ","
        << dsp_usage(configs[i]) << "\n";
  }
  std::cout << "objective " << fmt(double(net.batch_size) / worst)
            << " images/cycle\n";

  json args;
  args["network"] = network;
  args["design"] = design;
  args["traces"] = trace_paths;
  args["sparsity"] = sparsity;
  args["exact"] = exact;
  write_manifest(dir, "model", args, seed, std::nullopt);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const std::string& network, const std::string& design,
                 const std::vector<std::string>& trace_paths, bool dense,
                 const std::string& out, uint64_t seed) {
  const NetworkSpec net = load_network(network);
  const auto configs = configs_from_design(load_json(design), net);
  const auto traces = load_layer_traces(trace_paths, net);

  const fs::path dir = prepare_out_dir(out);
  const NetworkSimResult result =
      simulate_with_adaptation(net, configs, traces, dense);
  write_sim_csv(dir / "sim.csv", net, configs, result);

  json summary;
  summary["throughput_images_per_cycle"] = result.throughput;
  uint64_t slowest = 0;
  std::string bottleneck;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    if (result.reports[i].measured_cycles >= slowest) {
      slowest = result.reports[i].measured_cycles;
      bottleneck = net.layers[i].name;
    }
  }
  summary["bottleneck"] = bottleneck;
  summary["slowest_layer_cycles"] = slowest;
  auto sfile = open_output(dir / "summary.json");
  sfile << summary.dump(2) << "\n";

  std::cout << "throughput " << fmt(result.throughput)
            << " images/cycle, bottleneck " << bottleneck << "\n";

  json args;
  args["network"] = network;
  args["design"] = design;
  args["traces"] = trace_paths;
  args["dense"] = dense;
  write_manifest(dir, "simulate", args, seed, std::nullopt);
  return 0;
}

// ---------------------------------------------------------------------------
// dse

AnnealSchedule schedule_from_config(const std::string& sa_config,
                                    uint64_t seed) {
  AnnealSchedule schedule;
  schedule.seed = seed;
  if (!sa_config.empty()) {
    const json doc = load_json(sa_config);
    schedule.initial_temperature =
        doc.value("initial_temperature", schedule.initial_temperature);
    schedule.cooling_rate = doc.value("cooling_rate", schedule.cooling_rate);
    schedule.iterations_per_temperature = doc.value(
        "iterations_per_temperature", schedule.iterations_per_temperature);
    schedule.min_temperature =
        doc.value("min_temperature", schedule.min_temperature);
  }
  return schedule;
}

int cmd_dse(const std::string& network, const std::vector<std::string>& traces_arg,
            const std::string& budget_path, uint64_t seed, double epsilon,
            uint32_t w_max, bool dense, bool exact,
            const std::string& sa_config, std::optional<double> freq_mhz,
            const std::string& out) {
  const NetworkSpec net = load_network(network);
  const ResourceBudget budget = load_budget(budget_path);
  const auto traces = load_layer_traces(traces_arg, net);
  const auto measured_stats = stats_per_layer(traces);
  const auto alloc_stats = dense ? dense_stats(net) : measured_stats;
  const ThroughputModel model =
      exact ? ThroughputModel::kExact : ThroughputModel::kLinear;

  if (net.layers.size() > budget.dsp ||
      9 * net.layers.size() > budget.lutram) {
    std::cerr << "error: budget (" << budget.dsp << " DSP, " << budget.lutram
              << " LUTRAM) cannot fit the minimal design: "
              << net.layers.size() << " DSP and " << 9 * net.layers.size()
              << " LUTRAM are required\n";
    return kExitInfeasible;
  }

  const fs::path dir = prepare_out_dir(out);
  const AnnealSchedule schedule = schedule_from_config(sa_config, seed);

  std::vector<AnnealLogEntry> log;
  DesignPoint point =
      allocate_macs(net, alloc_stats, budget, schedule, model, &log);

  {
    auto csv = open_output(dir / "sa_log.csv");
    csv << "iteration,temperature,objective,accepted\n";
    for (const AnnealLogEntry& entry : log) {
      csv << entry.iteration << "," << fmt(entry.temperature) << ","
          << fmt(entry.objective) << "," << (entry.accepted ? 1 : 0) << "\n";
    }
  }

  // Buffer sizing after allocation: split the remaining LUTRAM budget across
  // layers proportional to their stream counts. Dense engines run at a
  // constant rate and need no skew buffering.
  if (!dense) {
    uint64_t par_sum = 0;
    for (const LayerConfig& config : point.configs) {
      par_sum += config.par_in;
    }
    for (size_t i = 0; i < point.configs.size(); ++i) {
      const uint64_t cap =
          budget.lutram * point.configs[i].par_in / par_sum;
      const BufferSizing sizing = size_buffers(
          traces[i], cap, epsilon, w_max, point.configs[i].par_in);
      point.configs[i].buffer_depth = sizing.depth;
    }
    point.lutram_total = 0;
    for (const LayerConfig& config : point.configs) {
      point.lutram_total +=
          buffer_lutram_cost(config.buffer_depth, config.par_in);
    }
    point.feasible = point.dsp_total <= budget.dsp &&
                     point.lutram_total <= budget.lutram;
  }

  {
    auto dfile = open_output(dir / "design.json");
    dfile << design_to_json(net, point, alloc_stats, model).dump(2) << "\n";
  }

  const NetworkSimResult result =
      simulate_with_adaptation(net, point.configs, traces, dense);
  write_sim_csv(dir / "sim.csv", net, point.configs, result);

  json summary;
  summary["objective_images_per_cycle"] = point.objective;
  summary["simulated_throughput_images_per_cycle"] = result.throughput;
  summary["dsp_total"] = point.dsp_total;
  summary["lutram_total"] = point.lutram_total;
  if (freq_mhz) {
    // One MAC is a multiply and an add.
    uint64_t work = 0;
    for (const LayerSpec& layer : net.layers) {
      work += layer_workload(layer);
    }
    const double fps = result.throughput * (*freq_mhz) * 1e6;
    summary["fps"] = fps;
    summary["gops"] = 2.0 * double(work) * fps / double(net.batch_size) * 1e-9;
  }
  auto sfile = open_output(dir / "summary.json");
  sfile << summary.dump(2) << "\n";

  std::cout << "objective " << fmt(point.objective) << " images/cycle, DSP "
            << point.dsp_total << "/" << budget.dsp << ", LUTRAM "
            << point.lutram_total << "/" << budget.lutram << "\n";

  json args;
  args["network"] = network;
  args["traces"] = traces_arg;
  args["budget"] = budget_path;
  args["epsilon"] = epsilon;
  args["w_max"] = w_max;
  args["dense"] = dense;
  args["exact"] = exact;
  args["sa_config"] = sa_config;
  write_manifest(dir, "dse", args, seed, freq_mhz);
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct SimRow {
  std::string layer;
  uint32_t par_in, par_out, macs, depth;
  uint64_t measured, stalls;
  double model, overhead_pct;
};

std::vector<SimRow> parse_sim_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  std::string line;
  std::getline(in, line);  // header
  std::vector<SimRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    SimRow row;
    char name[256] = {};
    if (std::sscanf(line.c_str(),
                    "%255[^,],%u,%u,%u,%u,%llu,%lf,%llu,%lf", name,
                    &row.par_in, &row.par_out, &row.macs, &row.depth,
                    reinterpret_cast<unsigned long long*>(&row.measured),
                    &row.model,
                    reinterpret_cast<unsigned long long*>(&row.stalls),
                    &row.overhead_pct) != 9) {
      throw Error(path.string() + ": malformed row '" + line + "'");
    }
    row.layer = name;
    rows.push_back(row);
  }
  return rows;
}

int cmd_report(const std::string& run_dir, std::optional<double> freq_mhz) {
  const fs::path dir(run_dir);
  std::vector<std::string> missing;
  for (const char* artifact : {"manifest.json", "design.json", "sim.csv"}) {
    if (!fs::exists(dir / artifact)) {
      missing.push_back(artifact);
    }
  }
  if (!missing.empty()) {
    std::cerr << "error: run directory " << run_dir
              << " is missing artifacts:";
    for (const std::string& name : missing) {
      std::cerr << " " << name;
    }
    std::cerr << "\n";
    return kExitError;
  }

  const json manifest = load_json(dir / "manifest.json");
  const json design = load_json(dir / "design.json");
  const auto rows = parse_sim_csv(dir / "sim.csv");

  if (!freq_mhz && manifest.contains("frequency_mhz") &&
      manifest["frequency_mhz"].is_number()) {
    freq_mhz = manifest["frequency_mhz"].get<double>();
  }

  std::printf("%-12s %-16s %-9s %4s %4s %3s %5s %9s %12s %12s %9s\n", "layer",
              "shape", "kernel", "N_I", "N_O", "k", "w", "theta", "model",
              "measured", "overhead");
  uint64_t slowest = 0;
  uint64_t total_work = 0;
  const auto& layers = design.at("layers");
  for (size_t i = 0; i < rows.size(); ++i) {
    const SimRow& row = rows[i];
    const json& layer = layers.at(i);
    const LayerSpec spec{row.layer,
                         layer.at("c_in").get<uint32_t>(),
                         layer.at("c_out").get<uint32_t>(),
                         layer.at("h_out").get<uint32_t>(),
                         layer.at("w_out").get<uint32_t>(),
                         layer.at("k_x").get<uint32_t>(),
                         layer.at("k_y").get<uint32_t>()};
    total_work += layer_workload(spec);
    slowest = std::max(slowest, row.measured);
    char shape[64];
    std::snprintf(shape, sizeof(shape), "%ux%ux%u->%u", spec.h_out, spec.w_out,
                  spec.c_in, spec.c_out);
    char kernel[32];
    std::snprintf(kernel, sizeof(kernel), "%ux%u", spec.k_x, spec.k_y);
    std::printf("%-12s %-16s %-9s %4u %4u %3u %5u %9.4f %12.1f %12llu %8.2f%%\n",
                row.layer.c_str(), shape, kernel, row.par_in, row.par_out,
                row.macs, row.depth, layer.at("theta_min").get<double>(),
                row.model, static_cast<unsigned long long>(row.measured),
                row.overhead_pct);
  }

  const uint32_t batch = design.value("batch_size", 1u);
  std::printf("network objective: %s images/cycle\n",
              fmt(design.at("objective").get<double>()).c_str());
  if (freq_mhz) {
    const double fps = double(batch) * (*freq_mhz) * 1e6 / double(slowest);
    const double gops = 2.0 * double(total_work) * fps / double(batch) * 1e-9;
    std::printf("at %.1f MHz: %.2f fps, %.2f GOP/s\n", *freq_mhz, fps, gops);
  }

  // Published single-engine synthesis numbers for the MAC counts this design
  // uses on 3x3 layers (lookup table; not part of the performance model).
  std::vector<uint32_t> used;
  for (size_t i = 0; i < rows.size(); ++i) {
    const json& layer = layers.at(i);
    if (layer.at("k_x") == 3 && layer.at("k_y") == 3 &&
        engine_reference_utilization(rows[i].macs, nullptr) &&
        std::find(used.begin(), used.end(), rows[i].macs) == used.end()) {
      used.push_back(rows[i].macs);
    }
  }
  if (!used.empty()) {
    std::sort(used.begin(), used.end());
    std::printf("reference 3x3 engine synthesis per MAC count:\n");
    std::printf("  %3s %6s %6s %8s\n", "k", "LUT", "FF", "MHz");
    for (uint32_t k : used) {
      EngineUtilization ref;
      engine_reference_utilization(k, &ref);
      std::printf("  %3u %6u %6u %8.1f\n", k, ref.luts, ref.ffs,
                  ref.freq_mhz);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("PASS_DSE_THREADS")) {
    const int n = std::atoi(threads);
    if (n > 0) {
      omp_set_num_threads(n);
    }
  }

  CLI::App app{"Sparsity-aware streaming CNN accelerator toolflow"};
  app.require_subcommand(1);

  uint64_t seed = 1;
  std::string out_dir = "pass-out";
  std::optional<double> freq_mhz;

  // profile
  auto* profile = app.add_subcommand(
      "profile", "Sparsity statistics and back-pressure metric of traces");
  std::vector<std::string> profile_traces;
  profile->add_option("--traces", profile_traces, "Trace files")->required();
  profile->add_option("--out", out_dir, "Output directory");
  profile->add_option("--seed", seed, "Seed recorded in the manifest");

  // sweep-engine
  auto* sweep = app.add_subcommand(
      "sweep-engine", "Engine throughput across sparsity and MAC counts");
  uint32_t k_x = 3, k_y = 3, k_min = 1, k_max = 0;
  double p_step = 0.05;
  uint64_t sweep_length = 100000;
  sweep->add_option("--kx", k_x, "Kernel width");
  sweep->add_option("--ky", k_y, "Kernel height");
  sweep->add_option("--k-min", k_min, "Smallest MAC count");
  sweep->add_option("--k-max", k_max, "Largest MAC count (default K_x*K_y)");
  sweep->add_option("--p-step", p_step, "Sparsity grid step");
  sweep->add_option("--length", sweep_length, "Windows per grid point");
  sweep->add_option("--out", out_dir, "Output directory");
  sweep->add_option("--seed", seed, "Trace generator seed");

  // gen-trace
  auto* gen = app.add_subcommand(
      "gen-trace", "Generate a synthetic sparsity trace file");
  uint32_t gen_streams = 1, gen_burst = 16;
  uint64_t gen_length = 100000;
  double gen_p = 0.5;
  std::string gen_model = "iid-bernoulli", gen_layer = "synthetic";
  std::string gen_out_file = "trace.bin";
  bool gen_csv = false;
  gen->add_option("--kx", k_x, "Kernel width");
  gen->add_option("--ky", k_y, "Kernel height");
  gen->add_option("--streams", gen_streams, "Parallel streams (M)");
  gen->add_option("--length", gen_length, "Windows per stream (T)");
  gen->add_option("--model", gen_model,
                  "constant | iid-bernoulli | markov-bursty");
  gen->add_option("--p-zero", gen_p, "Target mean sparsity");
  gen->add_option("--burst", gen_burst, "Burst length (markov-bursty)");
  gen->add_option("--layer", gen_layer, "Layer name stored in the header");
  gen->add_flag("--csv", gen_csv, "Write the CSV format instead of binary");
  gen->add_option("--out-file", gen_out_file, "Destination path");
  gen->add_option("--seed", seed, "Generator seed");

  // model
  auto* model_cmd = app.add_subcommand(
      "model", "Closed-form per-layer latency and throughput");
  std::string network_path, design_path;
  std::vector<std::string> model_traces;
  double model_sparsity = 0.0;
  bool use_exact = false;
  model_cmd->add_option("--network", network_path, "Network file")->required();
  model_cmd->add_option("--design", design_path, "Design file")->required();
  model_cmd->add_option("--traces", model_traces, "Trace files (else --sparsity)");
  model_cmd->add_option("--sparsity", model_sparsity, "Uniform mean sparsity");
  model_cmd->add_flag("--exact", use_exact, "Exact binomial throughput model");
  model_cmd->add_option("--out", out_dir, "Output directory");
  model_cmd->add_option("--seed", seed, "Seed recorded in the manifest");

  // simulate
  auto* simulate = app.add_subcommand(
      "simulate", "Cycle-level simulation of a designed network");
  std::vector<std::string> sim_traces;
  bool dense = false;
  simulate->add_option("--network", network_path, "Network file")->required();
  simulate->add_option("--design", design_path, "Design file")->required();
  simulate->add_option("--traces", sim_traces, "Trace files")->required();
  simulate->add_flag("--dense", dense, "Dense baseline engines");
  simulate->add_option("--out", out_dir, "Output directory");
  simulate->add_option("--seed", seed, "Seed recorded in the manifest");

  // dse
  auto* dse = app.add_subcommand(
      "dse", "MAC allocation and buffer sizing under a resource budget");
  std::vector<std::string> dse_traces;
  std::string budget_path, sa_config;
  double epsilon = 0.1;
  uint32_t w_max = 256;
  dse->add_option("--network", network_path, "Network file")->required();
  dse->add_option("--traces", dse_traces, "Trace files")->required();
  dse->add_option("--budget", budget_path, "Budget file")->required();
  dse->add_option("--seed", seed, "Annealer seed");
  dse->add_option("--epsilon", epsilon, "Buffer sizing stop threshold");
  dse->add_option("--w-max", w_max, "Largest buffer depth to consider");
  dse->add_flag("--dense", dense, "Design for the dense baseline engine");
  dse->add_flag("--exact", use_exact, "Exact binomial throughput model");
  dse->add_option("--sa-config", sa_config, "Annealing schedule overrides");
  dse->add_option("--freq-mhz", freq_mhz, "Clock for GOP/s reporting");
  dse->add_option("--out", out_dir, "Output directory");

  // report
  auto* report = app.add_subcommand("report", "Summarize a finished run");
  std::string run_dir;
  report->add_option("--run", run_dir, "Run directory")->required();
  report->add_option("--freq-mhz", freq_mhz, "Clock for GOP/s reporting");

  CLI11_PARSE(app, argc, argv);

  try {
    if (profile->parsed()) {
      return cmd_profile(profile_traces, out_dir, seed);
    }
    if (sweep->parsed()) {
      if (k_max == 0) {
        k_max = k_x * k_y;
      }
      return cmd_sweep_engine(k_x, k_y, k_min, k_max, p_step, sweep_length,
                              seed, out_dir);
    }
    if (gen->parsed()) {
      return cmd_gen_trace(k_x, k_y, gen_streams, gen_length, gen_model,
                           gen_p, gen_burst, seed, gen_layer, gen_csv,
                           gen_out_file);
    }
    if (model_cmd->parsed()) {
      return cmd_model(network_path, design_path, model_traces, model_sparsity,
                       use_exact, out_dir, seed);
    }
    if (simulate->parsed()) {
      return cmd_simulate(network_path, design_path, sim_traces, dense,
                          out_dir, seed);
    }
    if (dse->parsed()) {
      return cmd_dse(network_path, dse_traces, budget_path, seed, epsilon,
                     w_max, dense, use_exact, sa_config, freq_mhz, out_dir);
    }
    if (report->parsed()) {
      return cmd_report(run_dir, freq_mhz);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
