#pragma once

// Multi-scale graph structure learning: two global graphs generated from
// trainable node embeddings through a shared network and kept sparse by
// Gumbel noise, plus a local graph modulated by node distances.

#include <array>
#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "samsgl/engine/ops.hpp"
#include "samsgl/random.hpp"

namespace samsgl::graphs {

using engine::Tensor;

enum class Mode { train, eval };

/// Node positions or a precomputed distance matrix.
struct Geometry {
  enum class Kind { none, planar, lonlat, distance };
  Kind kind = Kind::none;
  std::size_t nodes = 0;
  std::vector<std::array<double, 2>> coords;  // planar (x, y) or (lon, lat) in degrees
  std::vector<double> distances;              // N*N, only for Kind::distance

  static Geometry planar(std::vector<std::array<double, 2>> xy);
  static Geometry lonlat(std::vector<std::array<double, 2>> lon_lat);
  static Geometry from_distances(std::size_t nodes, std::vector<double> matrix);
  bool has_coords() const { return kind == Kind::planar || kind == Kind::lonlat; }
  bool empty() const { return kind == Kind::none; }
};

enum class DistanceMetric { euclidean, great_circle };

DistanceMetric parse_metric(const std::string& text);
std::string to_string(DistanceMetric metric);

/// Reads `node,x,y`, `node,lon,lat` (comma or whitespace separated, header
/// required) or a whitespace-separated N x N distance matrix.
Geometry load_geometry(const std::string& path);

/// Symmetric N*N distances with zero diagonal. Great-circle distances are
/// central angles on the unit sphere times `radius`.
std::vector<double> pairwise_distance(const Geometry& geometry, DistanceMetric metric, double radius = 1.0);

// ------------------------------------------------------------------ Gumbel

/// -log(-log(u)).
double gumbel_from_uniform(double u);

std::vector<double> sample_gumbel(std::size_t count, std::mt19937_64& rng);

/// Differences g - g' of paired Gumbel(0,1) draws.
std::vector<double> sample_gumbel_difference(std::size_t count, std::mt19937_64& rng);

/// a = sigmoid(logit(p) + (g - g') / s). Eval mode returns `prob` unchanged.
/// `noise` supplies g - g' in train mode; when absent it is drawn from `rng`.
template <typename T>
Tensor<T> gumbel_regularize(const Tensor<T>& prob, double temperature, Mode mode, std::mt19937_64* rng,
                            const std::vector<double>* noise = nullptr);

/// Same map written on the logits: sigmoid(logits + noise / s). Avoids the
/// logit(sigmoid(.)) round trip when the raw graph is already a sigmoid.
template <typename T>
Tensor<T> gumbel_regularize_logits(const Tensor<T>& logits, double temperature, const std::vector<double>* noise);

// ------------------------------------------------------------------ global graphs

/// Two-layer perceptron shared by both embedding sets: tanh(E W1 + b1) W2 + b2.
template <typename T>
struct SharedGenerator {
  Tensor<T> w1, b1, w2, b2;
};

template <typename T>
Tensor<T> generalized_embedding(const Tensor<T>& embedding, const SharedGenerator<T>& gen);

/// E~ E~^T before squashing.
template <typename T>
Tensor<T> global_graph_logits(const Tensor<T>& embedding, const SharedGenerator<T>& gen);

/// sigmoid(E~ E~^T); symmetric with entries in (0, 1).
template <typename T>
Tensor<T> global_graph_raw(const Tensor<T>& embedding, const SharedGenerator<T>& gen);

// ------------------------------------------------------------------ local graph

/// Parameter-free part of the local graph: the Gaussian distance kernel and
/// the relative-location features fed to the MLP.
struct LocalGraphInputs {
  std::size_t nodes = 0;
  double alpha = 0.0;
  std::vector<double> distances;  // N*N
  std::vector<double> kernel;     // N*N, exp(-d^2 / alpha), top-k masked
  std::vector<double> features;   // N*N rows of `feature_dim`
  std::size_t feature_dim = 0;
};

/// `alpha` defaults to the mean of the nonzero squared distances.
/// `top_k` > 0 keeps only the k largest kernel entries per row.
LocalGraphInputs local_graph_inputs(const Geometry& geometry, DistanceMetric metric,
                                    std::optional<double> alpha = std::nullopt, double radius = 1.0,
                                    std::size_t top_k = 0);

template <typename T>
struct LocalMlp {
  Tensor<T> w1, b1, w2, b2;  // feature_dim -> hidden -> 1
};

/// a_ij = exp(-d_ij^2 / alpha) * softplus(MLP(r_ij)).
template <typename T>
Tensor<T> local_graph(const LocalGraphInputs& inputs, const LocalMlp<T>& mlp);

// ------------------------------------------------------------------ graph set

template <typename T>
struct GraphParams {
  Tensor<T> embedding_nd;  // [N x d_e]
  Tensor<T> embedding_d;   // [N x d_e]
  SharedGenerator<T> generator;
  LocalMlp<T> local;
};

template <typename T>
struct GraphSet {
  Tensor<T> non_delayed;  // A_nd
  Tensor<T> delayed;      // A_d
  Tensor<T> local;        // A_l
};

struct GraphNoise {
  std::vector<double> non_delayed;  // g - g' for A_nd
  std::vector<double> delayed;      // g - g' for A_d
};

struct GraphBuildOptions {
  double temperature = 0.5;
  bool global_graphs = true;
  bool local_graph = true;
};

/// Builds (A_nd, A_d, A_l). In train mode the Gumbel noise is drawn from
/// `rng` unless `frozen_noise` is given; the noise actually used is written to
/// `used_noise` when non-null. Disabled graphs are left undefined.
template <typename T>
GraphSet<T> build_graph_set(const GraphParams<T>& params, const LocalGraphInputs* local_inputs,
                            const GraphBuildOptions& options, Mode mode, std::mt19937_64* rng,
                            const GraphNoise* frozen_noise = nullptr, GraphNoise* used_noise = nullptr);

}  // namespace samsgl::graphs
