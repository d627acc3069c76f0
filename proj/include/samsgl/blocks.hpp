#pragma once

// Graph-FC blocks and the stacked forecasting model.
//
// Each block fuses three graph convolutions (series-aligned over A_nd, plain
// over A_d and A_l), flattens time into features, runs a temporal MLP and
// emits a backward vector (the next block's input) and a forward vector. The
// forecast is an affine head applied to the sum of all forward vectors.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "samsgl/alignment.hpp"
#include "samsgl/graphs.hpp"

namespace samsgl::blocks {

using engine::NamedTensor;
using engine::Tensor;
using graphs::Mode;

enum class ResidualMode { passthrough, subtract };

ResidualMode parse_residual_mode(const std::string& text);
std::string to_string(ResidualMode mode);

struct ModelConfig {
  std::size_t nodes = 0;
  std::size_t history = 12;          // L
  std::size_t horizon = 12;          // L'
  std::size_t input_channels = 1;    // C_in
  std::size_t output_channels = 1;   // C_out
  std::size_t hidden = 64;           // D
  std::size_t blocks = 4;            // M
  std::size_t kernel = 3;
  std::size_t fc_width = 256;
  std::size_t embed_dim = 10;        // d_e
  std::size_t local_hidden = 16;
  alignment::ReferenceStrategy reference;
  double temperature = 0.5;
  std::optional<double> alpha;       // unset: mean nonzero squared distance
  graphs::DistanceMetric metric = graphs::DistanceMetric::euclidean;
  double radius = 1.0;
  std::size_t local_top_k = 0;
  bool normalize_scores = false;
  ResidualMode residual = ResidualMode::passthrough;
  bool series_alignment = true;
  bool global_graphs = true;
  bool local_graph = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// Ordered collection of named trainable arrays.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add(std::string name, Shape shape, std::vector<T> values);
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<NamedTensor<T>>& entries() const { return entries_; }
  std::size_t total_size() const;
  void zero_grad();

 private:
  std::vector<NamedTensor<T>> entries_;
};

template <typename T>
struct BlockParams {
  alignment::SeriesAlignedParams<T> aligned;
  Tensor<T> w_plain;  // [D x D], A_nd convolution when series alignment is off
  Tensor<T> w_d, w_l; // [D x D]
  Tensor<T> fuse_w, fuse_b;
  Tensor<T> mlp1_w, mlp1_b, mlp2_w, mlp2_b;
  Tensor<T> back_w, back_b, fore_w, fore_b;
};

struct BlockOptions {
  alignment::SeriesAlignedOptions aligned;
  bool series_alignment = true;
};

template <typename T>
struct BlockOutput {
  Tensor<T> backcast;   // [B, N, L, D]
  Tensor<T> forecast;   // [B, N, L', D]
  alignment::DelayVector delays;
};

/// Per-time-step affine lift [B, N, L, C_in] -> [B, N, L, D].
template <typename T>
Tensor<T> embed_input(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// H0 = FC([H_nd, H_d, H_l]) over whichever graphs the set carries.
template <typename T>
Tensor<T> multi_graph_conv(const Tensor<T>& x, const graphs::GraphSet<T>& graph_set, const BlockParams<T>& params,
                           const BlockOptions& options, alignment::DelayVector* delays_out = nullptr);

template <typename T>
BlockOutput<T> graph_fc_block(const Tensor<T>& x, const graphs::GraphSet<T>& graph_set, const BlockParams<T>& params,
                              const BlockOptions& options, std::size_t horizon);

/// Frozen stochastic inputs for reproducible evaluation of a train-mode pass.
struct ForwardControl {
  const graphs::GraphNoise* frozen_noise = nullptr;
  const std::vector<alignment::DelayVector>* frozen_delays = nullptr;  // one per block
};

template <typename T>
struct ForwardTrace {
  graphs::GraphNoise noise;
  std::vector<alignment::DelayVector> delays;  // one per block
  std::vector<Tensor<T>> forecasts;            // X_f^m before the output head
};

template <typename T>
class Model {
 public:
  /// Initializes every parameter from `config.seed`. `geometry` is required
  /// when the local graph is enabled.
  Model(ModelConfig config, const graphs::Geometry* geometry);

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const std::vector<BlockParams<T>>& block_params() const { return blocks_; }
  const graphs::GraphParams<T>& graph_params() const { return graph_params_; }
  const graphs::LocalGraphInputs* local_inputs() const { return local_inputs_ ? &*local_inputs_ : nullptr; }

  graphs::GraphSet<T> build_graphs(Mode mode, std::mt19937_64* rng, const graphs::GraphNoise* frozen = nullptr,
                                   graphs::GraphNoise* used = nullptr) const;

  /// x: [B, N, L, C_in] -> [B, N, L', C_out].
  Tensor<T> forward(const Tensor<T>& x, Mode mode, std::mt19937_64* rng, const ForwardControl& control = {},
                    ForwardTrace<T>* trace = nullptr) const;

 private:
  ModelConfig config_;
  ParamStore<T> params_;
  Tensor<T> embed_w_, embed_b_;
  graphs::GraphParams<T> graph_params_;
  std::vector<BlockParams<T>> blocks_;
  Tensor<T> head_w_, head_b_;
  std::optional<graphs::LocalGraphInputs> local_inputs_;
};

/// Free-function form of Model::forward.
template <typename T>
Tensor<T> samsgl_forward(const Model<T>& model, const Tensor<T>& x, Mode mode, std::mt19937_64* rng);

// ------------------------------------------------------------------ checkpoints

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::string config_text;
  std::vector<CheckpointEntry> entries;
};

/// Binary container "SGCK" v1, little-endian: u32 version, u32 config length,
/// config text, u32 entry count, then per entry u32 name length, name, u32
/// rank, rank x u64 dims, f64 values. A text manifest "<path>.manifest"
/// lists one "name<TAB>shape" line per entry.
template <typename T>
void save_checkpoint(const std::string& path, const std::string& config_text, const ParamStore<T>& params);

Checkpoint load_checkpoint(const std::string& path);

/// Copies values into `params`; every name and shape must match exactly.
template <typename T>
void apply_checkpoint(ParamStore<T>& params, const Checkpoint& checkpoint);

}  // namespace samsgl::blocks
