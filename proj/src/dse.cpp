#include "pass/dse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>

namespace pass {

uint64_t buffer_lutram_cost(uint32_t depth, uint32_t streams) {
  const uint64_t steps = (uint64_t(depth) + 31) / 32;
  return uint64_t(9) * streams * (1 + steps);
}

namespace {

std::vector<uint32_t> sorted_divisors(uint32_t v) {
  std::vector<uint32_t> out;
  for (uint32_t d = 1; d * d <= v; ++d) {
    if (v % d == 0) {
      out.push_back(d);
      if (d != v / d) {
        out.push_back(v / d);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<uint32_t> ladder_step(const std::vector<uint32_t>& ladder,
                                    uint32_t value, int dir) {
  const auto it = std::find(ladder.begin(), ladder.end(), value);
  const size_t idx = size_t(it - ladder.begin());
  if (dir > 0) {
    return idx + 1 < ladder.size() ? std::optional(ladder[idx + 1])
                                   : std::nullopt;
  }
  return idx > 0 ? std::optional(ladder[idx - 1]) : std::nullopt;
}

// Search state shared by the greedy and annealing allocators. Buffer depths
// stay 0 here; only the handshake LUTRAM cost constrains the allocation and
// sizing happens afterwards.
struct Search {
  const NetworkSpec& net;
  const std::vector<SparsityStats>& stats;
  const ResourceBudget& budget;
  ThroughputModel model;
  std::vector<std::vector<uint32_t>> in_ladder;
  std::vector<std::vector<uint32_t>> out_ladder;

  Search(const NetworkSpec& n, const std::vector<SparsityStats>& s,
         const ResourceBudget& b, ThroughputModel m)
      : net(n), stats(s), budget(b), model(m) {
    for (const LayerSpec& layer : net.layers) {
      in_ladder.push_back(sorted_divisors(layer.c_in));
      out_ladder.push_back(sorted_divisors(layer.c_out));
    }
  }

  double latency(size_t i, const LayerConfig& config) const {
    return layer_latency(net.layers[i], config,
                         stats[i].per_stream_mean, model);
  }

  uint64_t dsp_total(std::span<const LayerConfig> configs) const {
    uint64_t total = 0;
    for (const LayerConfig& c : configs) {
      total += dsp_usage(c);
    }
    return total;
  }

  uint64_t lutram_total(std::span<const LayerConfig> configs) const {
    uint64_t total = 0;
    for (const LayerConfig& c : configs) {
      total += buffer_lutram_cost(c.buffer_depth, c.par_in);
    }
    return total;
  }

  bool fits(uint64_t dsp, uint64_t lutram) const {
    return dsp <= budget.dsp && lutram <= budget.lutram;
  }

  double objective(std::span<const double> latencies) const {
    double worst = 0.0;
    for (double t : latencies) {
      worst = std::max(worst, t);
    }
    return double(net.batch_size) / worst;
  }
};

DesignPoint make_point(const Search& search,
                       std::vector<LayerConfig> configs) {
  DesignPoint point;
  point.dsp_total = search.dsp_total(configs);
  point.lutram_total = search.lutram_total(configs);
  point.feasible = search.fits(point.dsp_total, point.lutram_total);
  std::vector<double> latencies(configs.size());
  for (size_t i = 0; i < configs.size(); ++i) {
    latencies[i] = search.latency(i, configs[i]);
  }
  point.objective = search.objective(latencies);
  point.configs = std::move(configs);
  return point;
}

std::vector<LayerConfig> minimal_configs(size_t layers) {
  return std::vector<LayerConfig>(layers, LayerConfig{1, 1, 1, 0});
}

void check_inputs(const NetworkSpec& net,
                  const std::vector<SparsityStats>& stats,
                  const ResourceBudget& budget) {
  validate(net);
  if (stats.size() != net.layers.size()) {
    throw Error("allocator: one stats entry per layer required");
  }
  const uint64_t min_dsp = net.layers.size();
  const uint64_t min_lutram = 9 * net.layers.size();
  if (min_dsp > budget.dsp || min_lutram > budget.lutram) {
    throw Error("allocator: budget cannot fit even the minimal design (" +
                std::to_string(min_dsp) + " DSP, " +
                std::to_string(min_lutram) + " LUTRAM)");
  }
}

}  // namespace

DesignPoint greedy_allocate(const NetworkSpec& net,
                            const std::vector<SparsityStats>& stats,
                            const ResourceBudget& budget,
                            ThroughputModel model) {
  check_inputs(net, stats, budget);
  Search search(net, stats, budget, model);
  const size_t L = net.layers.size();

  std::vector<LayerConfig> configs = minimal_configs(L);
  std::vector<double> latencies(L);
  for (size_t i = 0; i < L; ++i) {
    latencies[i] = search.latency(i, configs[i]);
  }
  uint64_t dsp = search.dsp_total(configs);
  uint64_t lutram = search.lutram_total(configs);

  while (true) {
    size_t bottleneck = 0;
    for (size_t i = 1; i < L; ++i) {
      if (latencies[i] > latencies[bottleneck]) {
        bottleneck = i;
      }
    }

    // Candidate single-variable upgrades of the bottleneck layer; keep the
    // cheapest (in DSP) that actually improves its latency.
    const LayerConfig& cur = configs[bottleneck];
    struct Candidate {
      LayerConfig config;
      uint64_t dsp_cost;
      double latency;
    };
    std::optional<Candidate> best;
    auto consider = [&](LayerConfig next) {
      const uint64_t next_dsp = dsp - dsp_usage(cur) + dsp_usage(next);
      const uint64_t next_lutram =
          lutram - buffer_lutram_cost(cur.buffer_depth, cur.par_in) +
          buffer_lutram_cost(next.buffer_depth, next.par_in);
      if (!search.fits(next_dsp, next_lutram)) {
        return;
      }
      const double next_latency = search.latency(bottleneck, next);
      if (next_latency >= latencies[bottleneck]) {
        return;
      }
      const uint64_t cost = dsp_usage(next) - dsp_usage(cur);
      if (!best || cost < best->dsp_cost) {
        best = Candidate{next, cost, next_latency};
      }
    };

    if (auto up = ladder_step(search.in_ladder[bottleneck], cur.par_in, +1)) {
      LayerConfig next = cur;
      next.par_in = *up;
      consider(next);
    }
    if (auto up = ladder_step(search.out_ladder[bottleneck], cur.par_out, +1)) {
      LayerConfig next = cur;
      next.par_out = *up;
      consider(next);
    }
    if (cur.macs < net.layers[bottleneck].kernel_volume()) {
      LayerConfig next = cur;
      next.macs = cur.macs + 1;
      consider(next);
    }

    if (!best) {
      break;  // the bottleneck cannot improve, so the objective cannot
    }
    dsp = dsp - dsp_usage(configs[bottleneck]) + dsp_usage(best->config);
    lutram = lutram -
             buffer_lutram_cost(configs[bottleneck].buffer_depth,
                                configs[bottleneck].par_in) +
             buffer_lutram_cost(best->config.buffer_depth,
                                best->config.par_in);
    configs[bottleneck] = best->config;
    latencies[bottleneck] = best->latency;
  }

  return make_point(search, std::move(configs));
}

DesignPoint allocate_macs(const NetworkSpec& net,
                          const std::vector<SparsityStats>& stats,
                          const ResourceBudget& budget,
                          const AnnealSchedule& schedule,
                          ThroughputModel model,
                          std::vector<AnnealLogEntry>* log) {
  check_inputs(net, stats, budget);
  if (schedule.cooling_rate <= 0.0 || schedule.cooling_rate >= 1.0) {
    throw Error("anneal: cooling_rate must lie in (0, 1)");
  }
  if (schedule.iterations_per_temperature == 0) {
    throw Error("anneal: iterations_per_temperature must be >= 1");
  }

  Search search(net, stats, budget, model);
  const size_t L = net.layers.size();
  std::mt19937_64 rng(schedule.seed);
  std::uniform_int_distribution<size_t> pick_layer(0, L - 1);
  std::uniform_int_distribution<int> pick_var(0, 2);
  std::uniform_int_distribution<int> pick_dir(0, 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Seed from the greedy baseline so the chain never returns anything worse.
  DesignPoint seed_point = greedy_allocate(net, stats, budget, model);
  std::vector<LayerConfig> configs = seed_point.configs;
  std::vector<double> latencies(L);
  for (size_t i = 0; i < L; ++i) {
    latencies[i] = search.latency(i, configs[i]);
  }
  uint64_t dsp = search.dsp_total(configs);
  uint64_t lutram = search.lutram_total(configs);
  double objective = search.objective(latencies);

  DesignPoint best = seed_point;

  // Proposal: step one variable of one random layer along its ladder.
  // Returns false if the move is illegal or busts the budget.
  auto propose = [&](LayerConfig& next, size_t& layer) -> bool {
    layer = pick_layer(rng);
    const int var = pick_var(rng);
    const int dir = pick_dir(rng) == 0 ? -1 : +1;
    next = configs[layer];
    if (var == 0) {
      auto step = ladder_step(search.in_ladder[layer], next.par_in, dir);
      if (!step) {
        return false;
      }
      next.par_in = *step;
    } else if (var == 1) {
      auto step = ladder_step(search.out_ladder[layer], next.par_out, dir);
      if (!step) {
        return false;
      }
      next.par_out = *step;
    } else {
      const int64_t macs = int64_t(next.macs) + dir;
      if (macs < 1 || macs > int64_t(net.layers[layer].kernel_volume())) {
        return false;
      }
      next.macs = uint32_t(macs);
    }
    const uint64_t next_dsp =
        dsp - dsp_usage(configs[layer]) + dsp_usage(next);
    const uint64_t next_lutram =
        lutram - buffer_lutram_cost(configs[layer].buffer_depth,
                                    configs[layer].par_in) +
        buffer_lutram_cost(next.buffer_depth, next.par_in);
    return search.fits(next_dsp, next_lutram);
  };

  auto objective_with = [&](size_t layer, double new_latency) {
    double worst = new_latency;
    for (size_t i = 0; i < L; ++i) {
      if (i != layer) {
        worst = std::max(worst, latencies[i]);
      }
    }
    return double(net.batch_size) / worst;
  };

  double initial_temp = schedule.initial_temperature;
  if (initial_temp <= 0.0) {
    // Probe: size the temperature so ~80% of observed uphill (worsening)
    // moves would be accepted.
    double downhill_sum = 0.0;
    uint32_t downhill_count = 0;
    for (int probe = 0; probe < 100; ++probe) {
      LayerConfig next;
      size_t layer = 0;
      if (!propose(next, layer)) {
        continue;
      }
      const double delta =
          objective_with(layer, search.latency(layer, next)) - objective;
      if (delta < 0.0) {
        downhill_sum += -delta;
        ++downhill_count;
      }
    }
    initial_temp = downhill_count > 0
                       ? (downhill_sum / downhill_count) / -std::log(0.8)
                       : std::max(objective * 0.1, 1e-12);
  }
  const double min_temp = schedule.min_temperature > 0.0
                              ? schedule.min_temperature
                              : initial_temp * 1e-4;

  uint64_t iteration = 0;
  for (double temp = initial_temp; temp >= min_temp;
       temp *= schedule.cooling_rate) {
    for (uint32_t it = 0; it < schedule.iterations_per_temperature; ++it) {
      ++iteration;
      LayerConfig next;
      size_t layer = 0;
      bool accepted = false;
      if (propose(next, layer)) {
        const double next_latency = search.latency(layer, next);
        const double next_objective = objective_with(layer, next_latency);
        const double delta = next_objective - objective;
        if (delta >= 0.0 || unif(rng) < std::exp(delta / temp)) {
          dsp = dsp - dsp_usage(configs[layer]) + dsp_usage(next);
          lutram = lutram -
                   buffer_lutram_cost(configs[layer].buffer_depth,
                                      configs[layer].par_in) +
                   buffer_lutram_cost(next.buffer_depth, next.par_in);
          configs[layer] = next;
          latencies[layer] = next_latency;
          objective = next_objective;
          accepted = true;
          if (objective > best.objective) {
            best = make_point(search, configs);
          }
        }
      }
      if (log) {
        log->push_back({iteration, temp, objective, accepted});
      }
    }
  }
  return best;
}

BufferSizing size_buffers(const SparsityTrace& trace, uint64_t lutram_cap,
                          double epsilon, uint32_t w_max,
                          uint32_t cost_streams) {
  if (!(epsilon > 0.0)) {
    throw Error("size_buffers: epsilon must be > 0");
  }
  if (w_max < 2) {
    throw Error("size_buffers: w_max must be >= 2");
  }
  const uint32_t streams = cost_streams != 0 ? cost_streams : trace.streams();

  BufferSizing result;

  // The stopping test at w needs rho at 2w, so the usable ladder ends at the
  // largest power of two with 2w <= T.
  if (trace.length() < 4) {
    throw Error("size_buffers: trace too short (need T >= 4)");
  }
  uint32_t usable = 2;
  while (uint64_t(usable) * 4 <= trace.length() && usable * 2 <= w_max) {
    usable *= 2;
  }
  result.w_max_reduced =
      usable * 2 <= w_max && uint64_t(usable) * 4 > trace.length();

  uint32_t chosen = usable;
  if (trace.streams() >= 2) {
    std::map<uint32_t, double> rho;
    auto rho_at = [&](uint32_t w) {
      auto it = rho.find(w);
      if (it == rho.end()) {
        it = rho.emplace(w, back_pressure_metric(trace, w)).first;
      }
      return it->second;
    };
    const double scale = std::max(rho_at(2), 1e-6);
    for (uint32_t w = 2; w <= usable; w *= 2) {
      if ((rho_at(w) - rho_at(2 * w)) / scale < epsilon) {
        chosen = w;
        break;
      }
    }
  } else {
    chosen = 2;  // a single stream has no cross-stream imbalance
  }

  // Clip to the largest depth whose staircase cost fits the cap.
  const uint64_t per_step = 9 * uint64_t(streams);
  const int64_t max_steps = per_step == 0
                                ? 0
                                : int64_t(lutram_cap / per_step) - 1;
  if (max_steps < 1) {
    result.depth = 0;
    result.cap_exceeded = true;
  } else {
    const uint64_t fit = 32 * uint64_t(max_steps);
    result.depth = uint32_t(std::min<uint64_t>(chosen, fit));
    result.cap_exceeded = result.depth < chosen;
  }
  return result;
}

}  // namespace pass
