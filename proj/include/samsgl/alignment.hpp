#pragma once

// Series-aligned graph convolution.
//
// Every node's projected series is correlated against a single reference
// series; the lag of the correlation peak gives that node's delay. Node
// features are rotated by their delays, reweighted by the correlation scores,
// convolved in time, aggregated over the non-delayed graph and rotated back.
//
// All tensors carry a leading batch axis: X is [B, N, L, D].

#include <cstddef>
#include <string>
#include <vector>

#include "samsgl/engine/ops.hpp"

namespace samsgl::alignment {

using engine::Tensor;

/// Per-row integer delays, row-major over (batch, node). Each entry is in [0, L).
using DelayVector = std::vector<std::size_t>;

template <typename T>
struct ProjectionParams {
  Tensor<T> w_q;  // [D_in x D]
  Tensor<T> w_k;  // [D_in x D]
};

struct ReferenceStrategy {
  enum class Kind { mean, node };
  Kind kind = Kind::mean;
  std::size_t node_index = 0;

  static ReferenceStrategy mean() { return {}; }
  static ReferenceStrategy node(std::size_t i) { return {Kind::node, i}; }

  /// Accepts "mean" or "node:<i>".
  static ReferenceStrategy parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const ReferenceStrategy&) const = default;
};

template <typename T>
struct QueryKey {
  Tensor<T> query;
  Tensor<T> key;
};

/// Q = X W_Q, K = X W_K applied per time step.
template <typename T>
QueryKey<T> project_qk(const Tensor<T>& x, const ProjectionParams<T>& params);

/// [B, N, L, D] -> [B, L, D].
template <typename T>
Tensor<T> reference_series(const Tensor<T>& query, const ReferenceStrategy& strategy);

/// zeta[b, i, t] = sum_d sum_u ref[b, u, d] * key[b, i, (u - t) mod L, d],
/// evaluated through real FFTs along the time axis. Shape [B, N, L].
template <typename T>
Tensor<T> correlation_scores(const Tensor<T>& reference, const Tensor<T>& key);

/// tau = (L - argmax_t zeta[t]) mod L per row, ties broken toward the
/// smallest lag index.
template <typename T>
DelayVector delays_from_scores(const Tensor<T>& scores);

/// Circular left rotation per (batch, node) row: out[t] = x[(t + tau) mod L].
template <typename T>
Tensor<T> align(const Tensor<T>& x, const DelayVector& delays);

/// Exact inverse of align: out[t] = x[(t - tau) mod L].
template <typename T>
Tensor<T> align_back(const Tensor<T>& x, const DelayVector& delays);

template <typename T>
struct SeriesAlignedParams {
  ProjectionParams<T> projection;
  Tensor<T> conv_kernel;  // [k x D x D]
};

struct SeriesAlignedOptions {
  ReferenceStrategy reference;
  bool normalize_scores = false;     // softmax over lags before reweighting
  const DelayVector* frozen_delays = nullptr;  // overrides the argmax when set
};

template <typename T>
struct SeriesAlignedResult {
  Tensor<T> output;   // [B, N, L, D]
  Tensor<T> scores;   // [B, N, L]
  DelayVector delays;
};

template <typename T>
SeriesAlignedResult<T> series_aligned_graph_conv(const Tensor<T>& x, const Tensor<T>& adjacency,
                                                 const SeriesAlignedParams<T>& params,
                                                 const SeriesAlignedOptions& options);

}  // namespace samsgl::alignment
