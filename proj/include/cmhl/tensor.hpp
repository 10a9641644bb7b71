#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cmhl/errors.hpp"

namespace cmhl {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

/// One value in the computation graph. Leaves (parameters, inputs) have no
/// inputs and no backward function. Interior nodes own shared references to
/// their inputs so the graph lives exactly as long as its outputs.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major fp64 tensor with optional reverse-mode gradient tracking.
///
/// Copies are shallow: two Tensor handles may refer to the same node, which
/// is how parameters are shared between a model and its optimizer.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    for (std::size_t extent : shape) {
      if (extent == 0) throw ShapeError("tensor extents must be positive: " + shape_str(shape));
    }
    if (shape_size(shape) != data.size()) {
      throw ShapeError("shape " + shape_str(shape) + " does not match " +
                       std::to_string(data.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> data(shape_size(shape), 0.0);
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    std::vector<double> data(shape_size(shape), value);
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> data() const { return node_->data; }
  /// Mutable access for optimizers, initializers and finite differencing.
  std::span<double> mutable_data() { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }

  /// A leaf sharing no graph history, holding a copy of the values.
  Tensor detach() const { return Tensor(node_->shape, node_->data, false); }
  Tensor clone(bool requires_grad) const { return Tensor(node_->shape, node_->data, requires_grad); }

  const char* op() const { return node_->op; }

  /// Populates gradients of every requires_grad tensor reachable from this
  /// scalar. Leaf gradients accumulate across calls; interior gradients are
  /// reset on each call.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Builds an op result. The backward function is only retained when at least
/// one input participates in differentiation.
inline Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                          std::vector<Tensor> inputs, std::function<void(Node&)> backward_fn) {
  Tensor out(std::move(shape), std::move(data), false);
  bool needs = false;
  for (const Tensor& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    auto& node = *out.node();
    node.requires_grad = true;
    node.op = op;
    node.inputs.reserve(inputs.size());
    for (Tensor& in : inputs) node.inputs.push_back(in.node());
    node.backward_fn = std::move(backward_fn);
  }
  return out;
}

/// Post-order over requires_grad nodes reachable from root; inputs always
/// precede their consumers.
inline std::vector<Node*> topological_order(Node* root) {
  std::vector<Node*> order;
  if (!root->requires_grad) return order;
  std::unordered_map<Node*, bool> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited[root] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !visited[child]) {
        visited[child] = true;
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace detail

inline void Tensor::backward() const {
  if (size() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + shape_str(shape()));
  }
  auto order = detail::topological_order(node_.get());
  for (detail::Node* n : order) {
    if (n->backward_fn) n->grad.assign(n->data.size(), 0.0);
  }
  if (order.empty()) return;
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

/// Ordered list of primitive applications that produced a value, as seen from
/// the backward pass. Ids index into `entries`.
struct ComputationRecord {
  struct Entry {
    std::string op;
    std::vector<std::size_t> inputs;
    std::size_t output;
  };
  std::vector<Entry> entries;
};

inline ComputationRecord record(const Tensor& root) {
  ComputationRecord rec;
  auto order = detail::topological_order(root.node().get());
  std::unordered_map<const detail::Node*, std::size_t> ids;
  for (std::size_t i = 0; i < order.size(); ++i) ids[order[i]] = i;
  for (std::size_t i = 0; i < order.size(); ++i) {
    ComputationRecord::Entry e{order[i]->op, {}, i};
    for (const auto& in : order[i]->inputs) {
      auto found = ids.find(in.get());
      if (found != ids.end()) e.inputs.push_back(found->second);
    }
    rec.entries.push_back(std::move(e));
  }
  return rec;
}

inline bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace cmhl
