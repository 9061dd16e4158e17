#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pass/error.hpp"
#include "pass/netspec.hpp"

namespace pass {

/// Per-stream time series of kernel-window non-zero masks. Bit set means the
/// activation at that kernel position is non-zero. All streams have the same
/// length; stream m feeds the m-th parallel input branch of a layer.
///
/// Masks are stored packed, one fixed-width slot of ceil(window_bits/64)
/// words per (stream, t), stream-major. Immutable once built; the statistics
/// functions below are pure and safe to call concurrently.
class SparsityTrace {
 public:
  SparsityTrace() = default;
  SparsityTrace(std::string layer, uint32_t window_bits, uint32_t streams,
                uint64_t length);

  const std::string& layer() const { return layer_; }
  uint32_t window_bits() const { return window_bits_; }  // K_x * K_y
  uint32_t streams() const { return streams_; }          // M
  uint64_t length() const { return length_; }            // T

  bool bit(uint32_t stream, uint64_t t, uint32_t i) const;
  void set_bit(uint32_t stream, uint64_t t, uint32_t i, bool nonzero);

  /// Number of set bits in the (stream, t) window.
  uint32_t nonzeros(uint32_t stream, uint64_t t) const;
  uint32_t zeros(uint32_t stream, uint64_t t) const {
    return window_bits_ - nonzeros(stream, t);
  }

  /// Raw words of one window slot (words_per_window() entries).
  const uint64_t* mask_words(uint32_t stream, uint64_t t) const;
  uint64_t* mask_words(uint32_t stream, uint64_t t);
  uint32_t words_per_window() const { return words_per_window_; }

  void check_index(uint32_t stream, uint64_t t) const;

 private:
  std::string layer_;
  uint32_t window_bits_ = 0;
  uint32_t streams_ = 0;
  uint64_t length_ = 0;
  uint32_t words_per_window_ = 0;
  std::vector<uint64_t> words_;
};

struct SparsityStats {
  std::vector<double> per_stream_mean;      // s_bar per stream, in [0,1]
  std::vector<double> per_stream_variance;  // population convention
  double global_mean = 0.0;
};

/// Zero fraction of one window: zeros / (K_x * K_y).
double instantaneous_sparsity(const SparsityTrace& trace, uint32_t stream,
                              uint64_t t);

/// Per-stream mean and population variance of instantaneous sparsity, plus
/// the workload-weighted global mean (streams have equal length, so this is
/// the plain mean of per-stream means).
SparsityStats compute_stats(const SparsityTrace& trace);
SparsityStats compute_stats_serial(const SparsityTrace& trace);

/// Moving average of instantaneous sparsity over w consecutive windows.
/// Output length T - w + 1; entry j covers samples [j, j + w - 1].
std::vector<double> moving_average(const SparsityTrace& trace, uint32_t stream,
                                   uint64_t w);

/// Back-pressure metric for buffer depth w: the mean over window positions of
/// the max-min gap of per-stream moving averages, minus the gap of the
/// per-stream mean sparsities (detrends stream imbalance). Signed; may be
/// slightly negative for finite traces. Requires at least two streams.
double back_pressure_metric(const SparsityTrace& trace, uint64_t w);
double back_pressure_metric_serial(const SparsityTrace& trace, uint64_t w);

/// Synthetic sparsity processes for driving experiments without real traces.
struct SparsityModel {
  enum class Kind { kConstant, kIidBernoulli, kMarkovBursty };

  Kind kind = Kind::kIidBernoulli;
  double p_zero = 0.5;        // target mean sparsity
  uint32_t burst_length = 16; // expected dwell time, markov-bursty only

  static SparsityModel constant(double p_zero);
  static SparsityModel iid_bernoulli(double p_zero);
  static SparsityModel markov_bursty(double p_zero, uint32_t burst_length);
};

/// Deterministic for a fixed seed regardless of thread count (each stream has
/// an independently derived generator). The constant model places
/// round(p_zero * K_x * K_y) zeros in every window.
SparsityTrace generate_synthetic_trace(const LayerSpec& layer,
                                       uint32_t streams, uint64_t length,
                                       const SparsityModel& model,
                                       uint64_t seed);

/// Rebuild a trace with a different stream count for simulation against a
/// config whose input parallelism differs from the measured M. Streams are
/// assigned round-robin from the source with a phase offset per replica so
/// replicated streams do not move in lockstep.
SparsityTrace adapt_streams(const SparsityTrace& trace, uint32_t streams);

/// Binary container: header {magic, version, layer name, K_x*K_y, M, T}
/// followed by M*T packed bit-masks (ceil(bits/8) bytes each), stream-major.
void write_trace(const SparsityTrace& trace, const std::filesystem::path& path);

/// CSV alternative for hand-authored traces: header "stream,t,mask" then one
/// row per (stream, t) with the mask as a 0/1 string, bit 0 first.
void write_trace_csv(const SparsityTrace& trace,
                     const std::filesystem::path& path);

/// Load either format (binary is detected by its magic).
SparsityTrace load_trace(const std::filesystem::path& path);

}  // namespace pass
