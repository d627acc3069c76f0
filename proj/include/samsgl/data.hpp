#pragma once

// Datasets: the STGF container, train-split normalization, sliding windows
// and a synthetic delayed-propagation generator with known delays.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "samsgl/graphs.hpp"

namespace samsgl::data {

enum class Split { train, val, test };

Split parse_split(const std::string& text);
std::string to_string(Split split);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;

  /// "0.7,0.1,0.2"; the three parts must be nonnegative and sum to 1.
  static SplitRatios parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const SplitRatios&) const = default;
};

enum class DType : std::uint32_t { f32 = 0, f64 = 1 };

struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct NormalizationStats {
  std::vector<double> mean;  // per channel
  std::vector<double> std;   // per channel, population std
};

struct Dataset {
  std::size_t steps = 0;     // T_total
  std::size_t nodes = 0;     // N
  std::size_t channels = 0;  // C
  std::vector<double> values;  // T x N x C, row-major
  DType dtype = DType::f64;    // precision used when written to STGF
  graphs::Geometry geometry;
  SplitRatios ratios;
  std::optional<NormalizationStats> stats;  // set once normalized

  double at(std::size_t t, std::size_t n, std::size_t c) const { return values[(t * nodes + n) * channels + c]; }

  /// Contiguous, ordered train -> val -> test time ranges.
  Range range(Split split) const;

  /// Maps normalized values of `channel` back to original units.
  double denormalize(double value, std::size_t channel) const;
};

// ------------------------------------------------------------------ STGF

/// STGF v1, little-endian: "STGF", u32 version, u32 N, u64 T, u32 C,
/// u32 dtype, u8 coord_kind, optional N x 2 f64 coordinates, then T blocks
/// of N x C values.
std::vector<unsigned char> encode_stgf(const Dataset& dataset);
Dataset decode_stgf(std::vector<unsigned char> bytes);

void write_stgf(const std::string& path, const Dataset& dataset);
Dataset load_stgf(const std::string& path);

/// Delimited text with header `time,node,channel,value`; every
/// (time, node, channel) cell must be present exactly once.
Dataset import_delimited(const std::string& path);

// ------------------------------------------------------------------ preprocessing

/// Per-channel mean/std over the train split only.
NormalizationStats compute_stats(const Dataset& dataset);

/// Standardizes all splits with train statistics; the stats travel with the
/// returned dataset for inverse transforms.
Dataset normalize(const Dataset& dataset);

struct WindowSample {
  std::size_t origin = 0;      // first input time step
  std::vector<double> input;   // N x L x C
  std::vector<double> target;  // N x L' x C
};

/// Stride-1 window origins inside one split: split_len - L - L' + 1 of them.
std::vector<std::size_t> window_origins(const Dataset& dataset, std::size_t history, std::size_t horizon, Split split);

WindowSample make_window(const Dataset& dataset, std::size_t origin, std::size_t history, std::size_t horizon);

/// Stacks windows into B x N x L x C inputs and B x N x L' x C targets.
struct Batch {
  std::size_t size = 0;
  std::vector<double> input;
  std::vector<double> target;
};
Batch make_batch(const Dataset& dataset, const std::vector<std::size_t>& origins, std::size_t history,
                 std::size_t horizon);

// ------------------------------------------------------------------ synthetic data

struct SynthSpec {
  std::size_t nodes = 16;
  std::size_t steps = 2000;
  std::size_t max_delay = 6;            // delays drawn in [0, max_delay)
  std::vector<std::size_t> delays;      // explicit per-node delays; overrides max_delay
  std::size_t components = 3;           // sinusoids in the base signal
  double min_period = 10.0;
  double max_period = 60.0;
  double noise = 0.0;                   // noise std as a fraction of the signal std
};

struct SynthResult {
  Dataset dataset;
  std::vector<std::size_t> delays;
};

/// Node 0 carries b(t) = sum_j sin(2 pi t / P_j + phi_j); node i carries
/// b(t - delay_i) plus Gaussian noise. Nodes sit at random planar positions
/// and, unless given explicitly, delays grow with distance from node 0.
SynthResult synth_delayed_diffusion(const SynthSpec& spec, std::uint64_t seed);

/// `spec.steps` samples of the same base signal per node, node i rotated
/// circularly by delay_i (delay_0 = 0, others uniform in [0, max_delay) unless
/// given) plus noise. Shifts are exact circular rotations of one window, so
/// the planted delays are the true cross-correlation lags.
SynthResult synth_shifted_copies(const SynthSpec& spec, std::uint64_t seed);

}  // namespace samsgl::data
