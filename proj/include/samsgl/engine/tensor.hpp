#pragma once

// Dense arrays with reverse-mode differentiation.
//
// A Tensor is a cheap handle to an immutable node. Ops build new nodes that
// keep their inputs alive together with a backward rule; calling backward()
// on a scalar walks that graph once in reverse topological order and
// accumulates gradients into every leaf created with requires_grad.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "samsgl/errors.hpp"

namespace samsgl {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace engine {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<T> values) {
    return leaf(std::move(shape), std::move(values), false);
  }
  static Tensor parameter(Shape shape, std::vector<T> values) {
    return leaf(std::move(shape), std::move(values), true);
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return leaf(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }
  static Tensor scalar(T v) { return constant({}, {v}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }
  std::span<const T> values() const { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }

  T item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  T at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) throw DimensionError("index rank mismatch for " + shape_str(shape()));
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
      if (i >= node_->shape[axis]) throw DimensionError("index out of range for " + shape_str(shape()));
      flat = flat * node_->shape[axis] + i;
      ++axis;
    }
    return node_->value[flat];
  }

  /// Overwrites the values of a leaf (optimizer updates, checkpoint loads).
  void assign(std::span<const T> values) {
    if (!node_->leaf) throw UsageError("assign() is only valid on leaf tensors");
    if (values.size() != size()) throw DimensionError("assign() size mismatch for " + shape_str(shape()));
    std::copy(values.begin(), values.end(), node_->value.begin());
  }

  void zero_grad() { node_->grad.clear(); }

  Tensor detach() const { return constant(shape(), node_->value); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& handle() const { return node_; }

 private:
  static Tensor leaf(Shape shape, std::vector<T> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("shape " + shape_str(shape) + " does not match " +
                           std::to_string(values.size()) + " values");
    }
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  std::shared_ptr<Node<T>> node_;
};

/// Creates the result node of an op. The graph edge and backward rule are
/// only kept when some input needs a gradient.
template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> values, std::initializer_list<Tensor<T>> inputs,
                  std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->leaf = false;
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    for (const auto& in : inputs) n->inputs.push_back(in.handle());
    n->backward = std::move(backward);
  }
  return Tensor<T>(std::move(n));
}

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> values, const std::vector<Tensor<T>>& inputs,
                  std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->leaf = false;
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    for (const auto& in : inputs) n->inputs.push_back(in.handle());
    n->backward = std::move(backward);
  }
  return Tensor<T>(std::move(n));
}

/// Topologically ordered view of the ops that a scalar depends on.
template <typename T>
struct Tape {
  std::vector<Node<T>*> ops;  // inputs precede consumers

  static Tape record(const Tensor<T>& root) {
    Tape tape;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        Node<T>* child = node->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      } else {
        tape.ops.push_back(node);
        stack.pop_back();
      }
    }
    return tape;
  }
};

/// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from
/// `loss`. The graph is released afterwards; a second call is an error.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward() needs a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  Node<T>* root = loss.node();
  if (root->consumed) throw UsageError("backward() already ran on this graph");
  if (!root->requires_grad) throw UsageError("loss does not depend on any parameter");
  auto tape = Tape<T>::record(loss);
  root->grad_buffer()[0] += T(1);
  for (auto it = tape.ops.rbegin(); it != tape.ops.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward) n->backward(*n);
  }
  for (Node<T>* n : tape.ops) {
    if (n->leaf) continue;
    n->backward = nullptr;
    n->inputs.clear();
    n->consumed = true;
  }
}

template <typename T>
using NamedTensor = std::pair<std::string, Tensor<T>>;

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = true;
};

/// Compares tape gradients against central differences for every entry of
/// every listed parameter. `f` must be deterministic in the parameter values.
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, abs_floor).
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& f, const std::vector<NamedTensor<T>>& params,
                           double eps, double tol, double abs_floor = 1e-6) {
  for (auto [name, p] : params) p.zero_grad();
  backward(f());
  GradCheckReport report;
  for (const auto& [name, p_const] : params) {
    auto p = p_const;
    std::vector<T> analytic(p.grad().begin(), p.grad().end());
    if (analytic.empty()) analytic.assign(p.size(), T(0));
    std::vector<T> base(p.values().begin(), p.values().end());
    GradCheckEntry entry;
    entry.name = name;
    std::vector<T> probe = base;
    for (std::size_t i = 0; i < base.size(); ++i) {
      probe[i] = base[i] + T(eps);
      p.assign(probe);
      double up = static_cast<double>(f().item());
      probe[i] = base[i] - T(eps);
      p.assign(probe);
      double down = static_cast<double>(f().item());
      probe[i] = base[i];
      p.assign(probe);
      double numeric = (up - down) / (2.0 * eps);
      double a = static_cast<double>(analytic[i]);
      double abs_err = std::abs(a - numeric);
      double rel = abs_err / std::max({std::abs(a), std::abs(numeric), abs_floor});
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
    }
    entry.passed = entry.max_rel_error <= tol;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.passed = report.passed && entry.passed;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace engine
}  // namespace samsgl
