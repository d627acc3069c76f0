#pragma once

// Differentiable ops over Tensor. Layout is row-major throughout; "batched"
// ops treat every leading axis as an independent batch.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "samsgl/engine/tensor.hpp"

namespace samsgl::engine {

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) + " differ");
}

template <typename T>
void add_into(std::vector<T>& dst, const std::vector<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[m x k] += G[m x n] * B[k x n]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* g, const T* b, T* da) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      da[i * k + p] += acc;
    }
  }
}

// dB[k x n] += A[m x k]^T * G[m x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* g, T* db) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      T* drow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
    }
  }
}

template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_op<T>(x.shape(), std::move(out), {x}, [deriv](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(in.value[i], self.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_op<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) detail::add_into(in->grad_buffer(), self.grad);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_op<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    if (self.inputs[0]->requires_grad) detail::add_into(self.inputs[0]->grad_buffer(), self.grad);
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad) {
      auto& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return detail::unary(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

/// Sum of an arbitrary number of same-shaped tensors.
template <typename T>
Tensor<T> add_n(const std::vector<Tensor<T>>& terms) {
  if (terms.empty()) throw UsageError("add_n: no terms");
  std::vector<T> out(terms[0].size(), T(0));
  for (const auto& t : terms) {
    detail::require_same_shape(terms[0].shape(), t.shape(), "add_n");
    const auto v = t.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return make_op<T>(terms[0].shape(), std::move(out), terms, [](Node<T>& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) detail::add_into(in->grad_buffer(), self.grad);
  });
}

// ---------------------------------------------------------------- activations

enum class Activation { relu, sigmoid, tanh, softplus };

template <typename T>
T sigmoid_value(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return sigmoid_value(v); }, [](T, T y) { return y * (T(1) - y); });
}

/// Sigmoid whose result never rounds to exactly 0 or 1.
template <typename T>
Tensor<T> sigmoid_open(const Tensor<T>& x) {
  return detail::unary(
      x,
      [](T v) {
        return std::clamp(sigmoid_value(v), std::numeric_limits<T>::min(), std::nextafter(T(1), T(0)));
      },
      [](T v, T) {
        const T y = sigmoid_value(v);
        return y * (T(1) - y);
      });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

/// log(1 + e^x), evaluated without overflow.
template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) { return sigmoid_value(v); });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  switch (kind) {
    case Activation::relu: return relu(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return tanh(x);
    case Activation::softplus: return softplus(x);
  }
  throw UsageError("unknown activation");
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

/// log(p / (1 - p)); every entry must lie strictly inside (0, 1).
template <typename T>
Tensor<T> logit(const Tensor<T>& p) {
  for (T v : p.values()) {
    if (!(v > T(0) && v < T(1))) throw DomainError("logit: entry " + std::to_string(v) + " outside (0,1)");
  }
  return detail::unary(
      p, [](T v) { return std::log(v / (T(1) - v)); }, [](T v, T) { return T(1) / (v * (T(1) - v)); });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.values()) acc += v;
  return make_op<T>({}, {acc}, {x}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

// ---------------------------------------------------------------- shape ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  return make_op<T>(std::move(shape), std::move(out), {x}, [](Node<T>& self) {
    detail::add_into(self.inputs[0]->grad_buffer(), self.grad);
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() != 2) throw DimensionError("transpose expects a matrix, got " + shape_str(x.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  return make_op<T>({n, m}, std::move(out), {x}, [m, n](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

/// Concatenation along the trailing axis; all leading axes must agree.
template <typename T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw UsageError("concat_last: no inputs");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape l(p.shape().begin(), p.shape().end() - 1);
    if (p.rank() == 0 || l != lead) throw DimensionError("concat_last: incompatible shape " + shape_str(p.shape()));
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<T> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.begin() + r * widths[k], widths[k], out.begin() + r * total + offset);
    offset += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  return make_op<T>(std::move(shape), std::move(out), parts, [rows, total, widths](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      auto& in = *self.inputs[k];
      if (in.requires_grad) {
        auto& g = in.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) g[r * widths[k] + j] += self.grad[r * total + off + j];
      }
      off += widths[k];
    }
  });
}

// ---------------------------------------------------------------- linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n, T(0));
  detail::gemm_nn(m, k, n, a.values().data(), b.values().data(), out.data());
  return make_op<T>({m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad) detail::gemm_nt(m, k, n, self.grad.data(), y.value.data(), x.grad_buffer().data());
    if (y.requires_grad) detail::gemm_tn(m, k, n, x.value.data(), self.grad.data(), y.grad_buffer().data());
  });
}

/// Affine map along the trailing axis: x[..., din] * W[din, dout] (+ b[dout]).
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias = {}) {
  if (weight.rank() != 2 || x.rank() == 0 || x.shape().back() != weight.dim(0)) {
    throw DimensionError("fully_connected: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t din = weight.dim(0), dout = weight.dim(1);
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != dout)) {
    throw DimensionError("fully_connected: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t rows = x.size() / din;
  std::vector<T> out(rows * dout, T(0));
  if (has_bias) {
    const auto bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * dout);
  }
  detail::gemm_nn(rows, din, dout, x.values().data(), weight.values().data(), out.data());
  Shape shape = x.shape();
  shape.back() = dout;
  auto rule = [rows, din, dout](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& w = *self.inputs[1];
    if (in.requires_grad) detail::gemm_nt(rows, din, dout, self.grad.data(), w.value.data(), in.grad_buffer().data());
    if (w.requires_grad) detail::gemm_tn(rows, din, dout, in.value.data(), self.grad.data(), w.grad_buffer().data());
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      auto& g = self.inputs[2]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < dout; ++j) g[j] += self.grad[r * dout + j];
    }
  };
  if (has_bias) return make_op<T>(std::move(shape), std::move(out), {x, weight, bias}, rule);
  return make_op<T>(std::move(shape), std::move(out), {x, weight}, rule);
}

/// Adds b[width] to every trailing row of x[..., width].
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.dim(0)) {
    throw DimensionError("add_bias: " + shape_str(x.shape()) + " vs bias " + shape_str(bias.shape()));
  }
  const std::size_t width = bias.dim(0);
  const std::size_t rows = x.size() / width;
  std::vector<T> out(x.values().begin(), x.values().end());
  const auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] += bv[j];
  return make_op<T>(x.shape(), std::move(out), {x, bias}, [rows, width](Node<T>& self) {
    if (self.inputs[0]->requires_grad) detail::add_into(self.inputs[0]->grad_buffer(), self.grad);
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < width; ++j) g[j] += self.grad[r * width + j];
    }
  });
}

/// Same-length 1-D convolution along the time axis with zero padding.
/// x: [..., L, D], kernel: [k, D, D'] with k odd -> [..., L, D'].
/// out[t] = sum_j x[t + j - (k-1)/2] * kernel[j].
template <typename T>
Tensor<T> conv1d_same(const Tensor<T>& x, const Tensor<T>& kernel) {
  if (kernel.rank() != 3) throw DimensionError("conv1d_same: kernel must be [k x D x D'], got " + shape_str(kernel.shape()));
  const std::size_t k = kernel.dim(0);
  if (k % 2 == 0) throw ConfigError("conv1d_same: kernel size must be odd, got " + std::to_string(k));
  if (x.rank() < 2 || x.shape().back() != kernel.dim(1)) {
    throw DimensionError("conv1d_same: input " + shape_str(x.shape()) + " does not match kernel " +
                         shape_str(kernel.shape()));
  }
  const std::size_t len = x.dim(x.rank() - 2);
  const std::size_t din = kernel.dim(1), dout = kernel.dim(2);
  const std::size_t series = x.size() / (len * din);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  std::vector<T> out(series * len * dout, T(0));
  const T* xv = x.values().data();
  const T* kv = kernel.values().data();
  for (std::size_t s = 0; s < series; ++s) {
    for (std::size_t t = 0; t < len; ++t) {
      T* orow = out.data() + (s * len + t) * dout;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        detail::gemm_nn(1, din, dout, xv + (s * len + static_cast<std::size_t>(src)) * din, kv + j * din * dout, orow);
      }
    }
  }
  Shape shape = x.shape();
  shape.back() = dout;
  return make_op<T>(std::move(shape), std::move(out), {x, kernel}, [=](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& ker = *self.inputs[1];
    T* gx = in.requires_grad ? in.grad_buffer().data() : nullptr;
    T* gk = ker.requires_grad ? ker.grad_buffer().data() : nullptr;
    for (std::size_t s = 0; s < series; ++s) {
      for (std::size_t t = 0; t < len; ++t) {
        const T* grow = self.grad.data() + (s * len + t) * dout;
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - half;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
          const std::size_t xoff = (s * len + static_cast<std::size_t>(src)) * din;
          if (gx) detail::gemm_nt(1, din, dout, grow, ker.value.data() + j * din * dout, gx + xoff);
          if (gk) detail::gemm_tn(1, din, dout, in.value.data() + xoff, grow, gk + j * din * dout);
        }
      }
    }
  });
}

/// Node aggregation: out[b, i, ...] = sum_j A[i, j] * x[b, j, ...].
/// x: [B, N, ...] with the node axis at position 1.
template <typename T>
Tensor<T> graph_aggregate(const Tensor<T>& adjacency, const Tensor<T>& x) {
  if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1) || x.rank() < 2 ||
      x.dim(1) != adjacency.dim(0)) {
    throw DimensionError("graph_aggregate: adjacency " + shape_str(adjacency.shape()) + " vs features " +
                         shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0), nodes = x.dim(1);
  const std::size_t feat = x.size() / (batch * nodes);
  std::vector<T> out(x.size(), T(0));
  const T* av = adjacency.values().data();
  const T* xv = x.values().data();
  for (std::size_t b = 0; b < batch; ++b)
    detail::gemm_nn(nodes, nodes, feat, av, xv + b * nodes * feat, out.data() + b * nodes * feat);
  return make_op<T>(x.shape(), std::move(out), {adjacency, x}, [batch, nodes, feat](Node<T>& self) {
    auto& a = *self.inputs[0];
    auto& in = *self.inputs[1];
    for (std::size_t b = 0; b < batch; ++b) {
      const T* g = self.grad.data() + b * nodes * feat;
      if (a.requires_grad) detail::gemm_nt(nodes, nodes, feat, g, in.value.data() + b * nodes * feat, a.grad_buffer().data());
      if (in.requires_grad) {
        // dX_b = A^T G_b
        T* dx = in.grad_buffer().data() + b * nodes * feat;
        for (std::size_t i = 0; i < nodes; ++i)
          for (std::size_t j = 0; j < nodes; ++j) {
            const T w = a.value[i * nodes + j];
            if (w == T(0)) continue;
            for (std::size_t f = 0; f < feat; ++f) dx[j * feat + f] += w * g[i * feat + f];
          }
      }
    }
  });
}

/// Mean over axis 1: x[B, N, ...] -> [B, ...].
template <typename T>
Tensor<T> mean_axis1(const Tensor<T>& x) {
  if (x.rank() < 2 || x.dim(1) == 0) throw DimensionError("mean_axis1: bad shape " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), count = x.dim(1);
  const std::size_t inner = x.size() / (batch * count);
  std::vector<T> out(batch * inner, T(0));
  const auto xv = x.values();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t n = 0; n < count; ++n)
      for (std::size_t f = 0; f < inner; ++f) out[b * inner + f] += xv[(b * count + n) * inner + f];
  const T inv = T(1) / static_cast<T>(count);
  for (auto& v : out) v *= inv;
  Shape shape = x.shape();
  shape.erase(shape.begin() + 1);
  return make_op<T>(std::move(shape), std::move(out), {x}, [batch, count, inner, inv](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t n = 0; n < count; ++n)
        for (std::size_t f = 0; f < inner; ++f) g[(b * count + n) * inner + f] += inv * self.grad[b * inner + f];
  });
}

/// Picks index `i` along axis 1: x[B, N, ...] -> [B, ...].
template <typename T>
Tensor<T> index_axis1(const Tensor<T>& x, std::size_t index) {
  if (x.rank() < 2) throw DimensionError("index_axis1: bad shape " + shape_str(x.shape()));
  if (index >= x.dim(1)) {
    throw DimensionError("index_axis1: index " + std::to_string(index) + " out of range for " + shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0), count = x.dim(1);
  const std::size_t inner = x.size() / (batch * count);
  std::vector<T> out(batch * inner);
  const auto xv = x.values();
  for (std::size_t b = 0; b < batch; ++b)
    std::copy_n(xv.begin() + (b * count + index) * inner, inner, out.begin() + b * inner);
  Shape shape = x.shape();
  shape.erase(shape.begin() + 1);
  return make_op<T>(std::move(shape), std::move(out), {x}, [batch, count, inner, index](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t f = 0; f < inner; ++f) g[(b * count + index) * inner + f] += self.grad[b * inner + f];
  });
}

/// Circular rotation of each row along the time axis.
/// x: [R, L, F...]-shaped as rows of length L (rows = leading product).
/// With `left`, out[r, t] = x[r, (t + shift_r) mod L]; otherwise
/// out[r, t] = x[r, (t - shift_r) mod L]. Shifts are constants.
template <typename T>
Tensor<T> roll_time(const Tensor<T>& x, std::size_t time_axis, const std::vector<std::size_t>& shifts, bool left) {
  if (time_axis >= x.rank()) throw DimensionError("roll_time: bad axis for " + shape_str(x.shape()));
  const std::size_t len = x.dim(time_axis);
  std::size_t rows = 1;
  for (std::size_t a = 0; a < time_axis; ++a) rows *= x.dim(a);
  const std::size_t inner = x.size() / (rows * std::max<std::size_t>(len, 1));
  if (shifts.size() != rows) {
    throw DimensionError("roll_time: " + std::to_string(shifts.size()) + " shifts for " + std::to_string(rows) + " rows");
  }
  for (auto s : shifts)
    if (s >= len) throw DomainError("roll_time: shift " + std::to_string(s) + " outside [0, " + std::to_string(len) + ")");
  auto src_index = [len, left](std::size_t t, std::size_t s) { return left ? (t + s) % len : (t + len - s) % len; };
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < len; ++t)
      std::copy_n(xv.begin() + (r * len + src_index(t, shifts[r])) * inner, inner, out.begin() + (r * len + t) * inner);
  return make_op<T>(x.shape(), std::move(out), {x}, [rows, len, inner, shifts, src_index](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t src = (r * len + src_index(t, shifts[r])) * inner;
        const std::size_t dst = (r * len + t) * inner;
        for (std::size_t f = 0; f < inner; ++f) g[src + f] += self.grad[dst + f];
      }
  });
}

/// Multiplies x[..., F] by a per-row weight w[...] (w has x's shape minus the
/// trailing axis), broadcasting over the trailing axis.
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, const Tensor<T>& weights) {
  Shape lead(x.shape().begin(), x.shape().end() - 1);
  if (x.rank() == 0 || weights.shape() != lead) {
    throw DimensionError("scale_rows: " + shape_str(x.shape()) + " vs weights " + shape_str(weights.shape()));
  }
  const std::size_t rows = weights.size();
  const std::size_t width = x.shape().back();
  std::vector<T> out(x.size());
  const auto xv = x.values();
  const auto wv = weights.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t f = 0; f < width; ++f) out[r * width + f] = xv[r * width + f] * wv[r];
  return make_op<T>(x.shape(), std::move(out), {x, weights}, [rows, width](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& w = *self.inputs[1];
    if (in.requires_grad) {
      auto& g = in.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t f = 0; f < width; ++f) g[r * width + f] += self.grad[r * width + f] * w.value[r];
    }
    if (w.requires_grad) {
      auto& g = w.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        T acc = T(0);
        for (std::size_t f = 0; f < width; ++f) acc += self.grad[r * width + f] * in.value[r * width + f];
        g[r] += acc;
      }
    }
  });
}

/// Softmax along the trailing axis.
template <typename T>
Tensor<T> softmax_last(const Tensor<T>& x) {
  if (x.rank() == 0) throw DimensionError("softmax_last on a scalar");
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.size() / width;
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = xv[r * width];
    for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, xv[r * width + j]);
    T total = T(0);
    for (std::size_t j = 0; j < width; ++j) total += out[r * width + j] = std::exp(xv[r * width + j] - mx);
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] /= total;
  }
  return make_op<T>(x.shape(), std::move(out), {x}, [rows, width](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = T(0);
      for (std::size_t j = 0; j < width; ++j) dot += self.grad[r * width + j] * self.value[r * width + j];
      for (std::size_t j = 0; j < width; ++j)
        g[r * width + j] += self.value[r * width + j] * (self.grad[r * width + j] - dot);
    }
  });
}

// ---------------------------------------------------------------- losses

template <typename T>
Tensor<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  return mean(abs(sub(pred, target)));
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
  for (T v : x.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace samsgl::engine
