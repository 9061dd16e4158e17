#include "pass/trace.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace pass {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'S', 'T', 'R', 'A', 'C', 'E'};
constexpr uint32_t kVersion = 1;

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(std::string(what) + " must lie in [0, 1]");
  }
}

std::mt19937_64 stream_rng(uint64_t seed, uint32_t stream) {
  std::seed_seq seq{seed, uint64_t(stream) + 1};
  return std::mt19937_64(seq);
}

}  // namespace

SparsityTrace::SparsityTrace(std::string layer, uint32_t window_bits,
                             uint32_t streams, uint64_t length)
    : layer_(std::move(layer)),
      window_bits_(window_bits),
      streams_(streams),
      length_(length),
      words_per_window_((window_bits + 63) / 64) {
  if (window_bits == 0) {
    throw Error("trace: window size must be >= 1");
  }
  if (streams == 0) {
    throw Error("trace: stream count must be >= 1");
  }
  if (length == 0) {
    throw Error("trace: length must be >= 1");
  }
  words_.assign(uint64_t(streams) * length * words_per_window_, 0);
}

void SparsityTrace::check_index(uint32_t stream, uint64_t t) const {
  if (stream >= streams_ || t >= length_) {
    throw Error("trace index (" + std::to_string(stream) + ", " +
                std::to_string(t) + ") out of range for " +
                std::to_string(streams_) + " x " + std::to_string(length_));
  }
}

const uint64_t* SparsityTrace::mask_words(uint32_t stream, uint64_t t) const {
  return words_.data() + (uint64_t(stream) * length_ + t) * words_per_window_;
}

uint64_t* SparsityTrace::mask_words(uint32_t stream, uint64_t t) {
  return words_.data() + (uint64_t(stream) * length_ + t) * words_per_window_;
}

bool SparsityTrace::bit(uint32_t stream, uint64_t t, uint32_t i) const {
  check_index(stream, t);
  if (i >= window_bits_) {
    throw Error("trace: bit index out of range");
  }
  return (mask_words(stream, t)[i / 64] >> (i % 64)) & 1u;
}

void SparsityTrace::set_bit(uint32_t stream, uint64_t t, uint32_t i,
                            bool nonzero) {
  check_index(stream, t);
  if (i >= window_bits_) {
    throw Error("trace: bit index out of range");
  }
  uint64_t& word = mask_words(stream, t)[i / 64];
  const uint64_t mask = uint64_t(1) << (i % 64);
  word = nonzero ? (word | mask) : (word & ~mask);
}

uint32_t SparsityTrace::nonzeros(uint32_t stream, uint64_t t) const {
  const uint64_t* slot = mask_words(stream, t);
  uint32_t count = 0;
  for (uint32_t w = 0; w < words_per_window_; ++w) {
    count += std::popcount(slot[w]);
  }
  return count;
}

double instantaneous_sparsity(const SparsityTrace& trace, uint32_t stream,
                              uint64_t t) {
  trace.check_index(stream, t);
  return double(trace.zeros(stream, t)) / trace.window_bits();
}

// Statistics accumulate exact integer zero counts and convert to double only
// at the end, so the parallel and serial paths produce identical bits.

SparsityStats compute_stats_serial(const SparsityTrace& trace) {
  const uint32_t kk = trace.window_bits();
  const uint64_t T = trace.length();
  SparsityStats stats;
  double mean_sum = 0.0;
  for (uint32_t m = 0; m < trace.streams(); ++m) {
    int64_t zeros = 0;
    int64_t zeros_sq = 0;
    for (uint64_t t = 0; t < T; ++t) {
      const int64_t z = trace.zeros(m, t);
      zeros += z;
      zeros_sq += z * z;
    }
    const double mean = double(zeros) / (double(T) * kk);
    const double mean_z = double(zeros) / double(T);
    const double var =
        (double(zeros_sq) / double(T) - mean_z * mean_z) / (double(kk) * kk);
    stats.per_stream_mean.push_back(mean);
    stats.per_stream_variance.push_back(std::max(0.0, var));
    mean_sum += mean;
  }
  stats.global_mean = mean_sum / trace.streams();
  return stats;
}

SparsityStats compute_stats(const SparsityTrace& trace) {
  const uint32_t kk = trace.window_bits();
  const uint64_t T = trace.length();
  SparsityStats stats;
  double mean_sum = 0.0;
  for (uint32_t m = 0; m < trace.streams(); ++m) {
    int64_t zeros = 0;
    int64_t zeros_sq = 0;
#pragma omp parallel for reduction(+ : zeros, zeros_sq) schedule(static)
    for (int64_t t = 0; t < int64_t(T); ++t) {
      const int64_t z = trace.zeros(m, uint64_t(t));
      zeros += z;
      zeros_sq += z * z;
    }
    const double mean = double(zeros) / (double(T) * kk);
    const double mean_z = double(zeros) / double(T);
    const double var =
        (double(zeros_sq) / double(T) - mean_z * mean_z) / (double(kk) * kk);
    stats.per_stream_mean.push_back(mean);
    stats.per_stream_variance.push_back(std::max(0.0, var));
    mean_sum += mean;
  }
  stats.global_mean = mean_sum / trace.streams();
  return stats;
}

std::vector<double> moving_average(const SparsityTrace& trace, uint32_t stream,
                                   uint64_t w) {
  if (stream >= trace.streams()) {
    throw Error("moving_average: stream index out of range");
  }
  const uint64_t T = trace.length();
  if (w < 1 || w > T) {
    throw Error("moving_average: window must satisfy 1 <= w <= T");
  }
  // Prefix sums of zero counts; psi(j) = (P[j+w] - P[j]) / (w * kk).
  std::vector<int64_t> prefix(T + 1, 0);
  for (uint64_t t = 0; t < T; ++t) {
    prefix[t + 1] = prefix[t] + trace.zeros(stream, t);
  }
  const double denom = double(w) * trace.window_bits();
  std::vector<double> out(T - w + 1);
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < int64_t(out.size()); ++j) {
    out[j] = double(prefix[j + w] - prefix[j]) / denom;
  }
  return out;
}

namespace {

std::vector<std::vector<int64_t>> zero_prefixes(const SparsityTrace& trace) {
  std::vector<std::vector<int64_t>> prefix(trace.streams());
  for (uint32_t m = 0; m < trace.streams(); ++m) {
    prefix[m].resize(trace.length() + 1);
    prefix[m][0] = 0;
    for (uint64_t t = 0; t < trace.length(); ++t) {
      prefix[m][t + 1] = prefix[m][t] + trace.zeros(m, t);
    }
  }
  return prefix;
}

void check_backpressure_args(const SparsityTrace& trace, uint64_t w) {
  if (trace.streams() < 2) {
    throw Error("back_pressure_metric: at least two streams required");
  }
  if (w < 1 || w > trace.length()) {
    throw Error("back_pressure_metric: window must satisfy 1 <= w <= T");
  }
}

double backpressure_from_gap(const SparsityTrace& trace, uint64_t w,
                             int64_t gap_sum, int64_t total_max,
                             int64_t total_min) {
  const uint64_t positions = trace.length() - w + 1;
  const double mean_gap =
      double(gap_sum) / (double(positions) * double(w) * trace.window_bits());
  const double mean_spread = double(total_max - total_min) /
                             (double(trace.length()) * trace.window_bits());
  return mean_gap - mean_spread;
}

}  // namespace

double back_pressure_metric_serial(const SparsityTrace& trace, uint64_t w) {
  check_backpressure_args(trace, w);
  const auto prefix = zero_prefixes(trace);
  const uint32_t M = trace.streams();
  const uint64_t positions = trace.length() - w + 1;
  int64_t gap_sum = 0;
  for (uint64_t j = 0; j < positions; ++j) {
    int64_t lo = INT64_MAX;
    int64_t hi = INT64_MIN;
    for (uint32_t m = 0; m < M; ++m) {
      const int64_t s = prefix[m][j + w] - prefix[m][j];
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    gap_sum += hi - lo;
  }
  int64_t total_min = INT64_MAX;
  int64_t total_max = INT64_MIN;
  for (uint32_t m = 0; m < M; ++m) {
    total_min = std::min(total_min, prefix[m].back());
    total_max = std::max(total_max, prefix[m].back());
  }
  return backpressure_from_gap(trace, w, gap_sum, total_max, total_min);
}

double back_pressure_metric(const SparsityTrace& trace, uint64_t w) {
  check_backpressure_args(trace, w);
  const auto prefix = zero_prefixes(trace);
  const uint32_t M = trace.streams();
  const uint64_t positions = trace.length() - w + 1;
  int64_t gap_sum = 0;
#pragma omp parallel for reduction(+ : gap_sum) schedule(static)
  for (int64_t j = 0; j < int64_t(positions); ++j) {
    int64_t lo = INT64_MAX;
    int64_t hi = INT64_MIN;
    for (uint32_t m = 0; m < M; ++m) {
      const int64_t s = prefix[m][j + w] - prefix[m][j];
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    gap_sum += hi - lo;
  }
  int64_t total_min = INT64_MAX;
  int64_t total_max = INT64_MIN;
  for (uint32_t m = 0; m < M; ++m) {
    total_min = std::min(total_min, prefix[m].back());
    total_max = std::max(total_max, prefix[m].back());
  }
  return backpressure_from_gap(trace, w, gap_sum, total_max, total_min);
}

SparsityModel SparsityModel::constant(double p_zero) {
  check_probability(p_zero, "constant model: p_zero");
  return {Kind::kConstant, p_zero, 0};
}

SparsityModel SparsityModel::iid_bernoulli(double p_zero) {
  check_probability(p_zero, "iid-bernoulli model: p_zero");
  return {Kind::kIidBernoulli, p_zero, 0};
}

SparsityModel SparsityModel::markov_bursty(double p_zero,
                                           uint32_t burst_length) {
  check_probability(p_zero, "markov-bursty model: p_zero");
  if (burst_length < 1) {
    throw Error("markov-bursty model: burst_length must be >= 1");
  }
  return {Kind::kMarkovBursty, p_zero, burst_length};
}

SparsityTrace generate_synthetic_trace(const LayerSpec& layer,
                                       uint32_t streams, uint64_t length,
                                       const SparsityModel& model,
                                       uint64_t seed) {
  check_probability(model.p_zero, "sparsity model: p_zero");
  if (model.kind == SparsityModel::Kind::kMarkovBursty &&
      model.burst_length < 1) {
    throw Error("markov-bursty model: burst_length must be >= 1");
  }
  const uint32_t kk = layer.kernel_volume();
  SparsityTrace trace(layer.name, kk, streams, length);

#pragma omp parallel for schedule(static)
  for (int64_t ms = 0; ms < int64_t(streams); ++ms) {
    const uint32_t m = uint32_t(ms);
    std::mt19937_64 rng = stream_rng(seed, m);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    switch (model.kind) {
      case SparsityModel::Kind::kConstant: {
        const uint32_t zero_count =
            uint32_t(std::llround(model.p_zero * kk));
        for (uint64_t t = 0; t < length; ++t) {
          for (uint32_t i = zero_count; i < kk; ++i) {
            trace.set_bit(m, t, i, true);
          }
        }
        break;
      }
      case SparsityModel::Kind::kIidBernoulli: {
        for (uint64_t t = 0; t < length; ++t) {
          for (uint32_t i = 0; i < kk; ++i) {
            trace.set_bit(m, t, i, unif(rng) >= model.p_zero);
          }
        }
        break;
      }
      case SparsityModel::Kind::kMarkovBursty: {
        // Symmetric two-state chain over windows with expected dwell time
        // burst_length; the states straddle p_zero with maximal contrast so
        // the long-run mean stays at p_zero.
        const double delta = std::min(model.p_zero, 1.0 - model.p_zero);
        const double p_hi = model.p_zero + delta;
        const double p_lo = model.p_zero - delta;
        const double flip = 1.0 / model.burst_length;
        bool high = unif(rng) < 0.5;
        for (uint64_t t = 0; t < length; ++t) {
          if (unif(rng) < flip) {
            high = !high;
          }
          const double p = high ? p_hi : p_lo;
          for (uint32_t i = 0; i < kk; ++i) {
            trace.set_bit(m, t, i, unif(rng) >= p);
          }
        }
        break;
      }
    }
  }
  return trace;
}

SparsityTrace adapt_streams(const SparsityTrace& trace, uint32_t streams) {
  if (streams == 0) {
    throw Error("adapt_streams: stream count must be >= 1");
  }
  const uint32_t M = trace.streams();
  const uint64_t T = trace.length();
  const uint32_t wpw = trace.words_per_window();
  SparsityTrace out(trace.layer(), trace.window_bits(), streams, T);

  if (streams == M) {
    for (uint32_t m = 0; m < M; ++m) {
      for (uint64_t t = 0; t < T; ++t) {
        std::memcpy(out.mask_words(m, t), trace.mask_words(m, t),
                    wpw * sizeof(uint64_t));
      }
    }
  } else if (streams < M && M % streams == 0) {
    // Fold: each output stream interleaves its round-robin group of source
    // streams, preserving the group's mix of statistics.
    const uint32_t group = M / streams;
    for (uint32_t s = 0; s < streams; ++s) {
      for (uint64_t t = 0; t < T; ++t) {
        const uint32_t src = s + streams * uint32_t(t % group);
        std::memcpy(out.mask_words(s, t), trace.mask_words(src, t),
                    wpw * sizeof(uint64_t));
      }
    }
  } else {
    // Replicate with per-replica phase offsets so copies of the same source
    // stream do not move in lockstep.
    const uint32_t replicas = (streams + M - 1) / M;
    for (uint32_t s = 0; s < streams; ++s) {
      const uint32_t src = s % M;
      const uint64_t offset = (T * uint64_t(s / M)) / replicas;
      for (uint64_t t = 0; t < T; ++t) {
        std::memcpy(out.mask_words(s, t),
                    trace.mask_words(src, (t + offset) % T),
                    wpw * sizeof(uint64_t));
      }
    }
  }
  return out;
}

namespace {

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  T value = 0;
  for (size_t i = 0; i < sizeof(T); ++i) {
    value |= T(bytes[i]) << (8 * i);
  }
  return value;
}

}  // namespace

void write_trace(const SparsityTrace& trace,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out.write(kMagic, sizeof(kMagic));
  write_le<uint32_t>(out, kVersion);
  write_le<uint32_t>(out, uint32_t(trace.layer().size()));
  out.write(trace.layer().data(), std::streamsize(trace.layer().size()));
  write_le<uint32_t>(out, trace.window_bits());
  write_le<uint32_t>(out, trace.streams());
  write_le<uint64_t>(out, trace.length());

  const uint32_t bytes_per_window = (trace.window_bits() + 7) / 8;
  std::vector<unsigned char> slot(bytes_per_window);
  for (uint32_t m = 0; m < trace.streams(); ++m) {
    for (uint64_t t = 0; t < trace.length(); ++t) {
      const uint64_t* words = trace.mask_words(m, t);
      for (uint32_t b = 0; b < bytes_per_window; ++b) {
        slot[b] =
            static_cast<unsigned char>((words[b / 8] >> (8 * (b % 8))) & 0xff);
      }
      out.write(reinterpret_cast<const char*>(slot.data()), bytes_per_window);
    }
  }
  if (!out) {
    throw Error("short write to " + path.string());
  }
}

namespace {

SparsityTrace read_trace_binary(std::istream& in, const std::string& context) {
  const uint32_t version = read_le<uint32_t>(in);
  if (version != kVersion) {
    throw Error(context + ": unsupported trace version " +
                std::to_string(version));
  }
  const uint32_t name_len = read_le<uint32_t>(in);
  if (name_len > (1u << 20)) {
    throw Error(context + ": corrupt header (layer name length)");
  }
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  const uint32_t kk = read_le<uint32_t>(in);
  const uint32_t streams = read_le<uint32_t>(in);
  const uint64_t length = read_le<uint64_t>(in);
  if (!in) {
    throw Error(context + ": truncated header");
  }
  if (kk == 0 || kk > 4096 || streams == 0 || length == 0) {
    throw Error(context + ": corrupt header fields");
  }

  SparsityTrace trace(name, kk, streams, length);
  const uint32_t bytes_per_window = (kk + 7) / 8;
  std::vector<unsigned char> slot(bytes_per_window);
  for (uint32_t m = 0; m < streams; ++m) {
    for (uint64_t t = 0; t < length; ++t) {
      in.read(reinterpret_cast<char*>(slot.data()), bytes_per_window);
      if (!in) {
        throw Error(context + ": truncated mask data");
      }
      uint64_t* words = trace.mask_words(m, t);
      for (uint32_t b = 0; b < bytes_per_window; ++b) {
        words[b / 8] |= uint64_t(slot[b]) << (8 * (b % 8));
      }
      // Bits beyond window_bits must be clear.
      const uint32_t tail = kk % 64;
      if (tail != 0) {
        const uint32_t last = trace.words_per_window() - 1;
        if ((words[last] >> tail) != 0) {
          throw Error(context + ": mask has bits past the window size");
        }
      }
    }
  }
  return trace;
}

SparsityTrace read_trace_csv(std::istream& in, const std::string& context,
                             const std::string& default_name) {
  std::string line;
  std::string layer_name = default_name;
  std::vector<std::tuple<uint32_t, uint64_t, std::string>> rows;
  uint32_t kk = 0;
  bool header_seen = false;
  size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    if (line[0] == '#') {
      const std::string prefix = "# layer=";
      if (line.rfind(prefix, 0) == 0) {
        layer_name = line.substr(prefix.size());
      }
      continue;
    }
    if (!header_seen) {
      if (line != "stream,t,mask") {
        throw Error(context + ":" + std::to_string(line_no) +
                    ": expected header 'stream,t,mask'");
      }
      header_seen = true;
      continue;
    }
    std::istringstream row(line);
    std::string stream_s, t_s, mask_s;
    if (!std::getline(row, stream_s, ',') || !std::getline(row, t_s, ',') ||
        !std::getline(row, mask_s)) {
      throw Error(context + ":" + std::to_string(line_no) + ": malformed row");
    }
    uint32_t stream = 0;
    uint64_t t = 0;
    try {
      stream = uint32_t(std::stoul(stream_s));
      t = std::stoull(t_s);
    } catch (const std::exception&) {
      throw Error(context + ":" + std::to_string(line_no) +
                  ": stream and t must be integers");
    }
    if (mask_s.empty() ||
        mask_s.find_first_not_of("01") != std::string::npos) {
      throw Error(context + ":" + std::to_string(line_no) +
                  ": mask must be a non-empty 0/1 string");
    }
    if (kk == 0) {
      kk = uint32_t(mask_s.size());
    } else if (mask_s.size() != kk) {
      throw Error(context + ":" + std::to_string(line_no) +
                  ": mask length differs from earlier rows");
    }
    rows.emplace_back(stream, t, std::move(mask_s));
  }

  if (rows.empty()) {
    throw Error(context + ": no trace rows found");
  }
  uint32_t streams = 0;
  uint64_t length = 0;
  for (const auto& [m, t, mask] : rows) {
    streams = std::max(streams, m + 1);
    length = std::max(length, t + 1);
  }
  SparsityTrace trace(layer_name, kk, streams, length);
  std::vector<bool> seen(size_t(streams) * length, false);
  for (const auto& [m, t, mask] : rows) {
    const size_t idx = size_t(m) * length + t;
    if (seen[idx]) {
      throw Error(context + ": duplicate row for stream " + std::to_string(m) +
                  ", t " + std::to_string(t));
    }
    seen[idx] = true;
    for (uint32_t i = 0; i < kk; ++i) {
      trace.set_bit(m, t, i, mask[i] == '1');
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw Error(context + ": missing rows; all (stream, t) pairs up to the " +
                "maxima must be present");
  }
  return trace;
}

}  // namespace

void write_trace_csv(const SparsityTrace& trace,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << "# layer=" << trace.layer() << "\n";
  out << "stream,t,mask\n";
  std::string mask(trace.window_bits(), '0');
  for (uint32_t m = 0; m < trace.streams(); ++m) {
    for (uint64_t t = 0; t < trace.length(); ++t) {
      for (uint32_t i = 0; i < trace.window_bits(); ++i) {
        mask[i] = trace.bit(m, t, i) ? '1' : '0';
      }
      out << m << "," << t << "," << mask << "\n";
    }
  }
}

SparsityTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (in.gcount() == std::streamsize(sizeof(magic)) &&
      std::memcmp(magic, kMagic, sizeof(kMagic)) == 0) {
    return read_trace_binary(in, path.string());
  }
  in.clear();
  in.seekg(0);
  return read_trace_csv(in, path.string(), path.stem().string());
}

}  // namespace pass
