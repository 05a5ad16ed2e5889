#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "hfnrv/error.hpp"

namespace hfnrv {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename T>
using Vec = Eigen::Array<T, Eigen::Dynamic, 1>;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape);

namespace detail {

/// Graph vertex. `backward` reads this node's grad and accumulates into the
/// grads of `inputs`; leaves (parameters) have no backward function.
template <typename T>
struct Node {
  Shape shape;
  Vec<T> value;
  Vec<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Vec<T>& grad_buffer() {
    if (grad.size() != value.size()) grad = Vec<T>::Zero(value.size());
    return grad;
  }
  [[nodiscard]] bool is_leaf() const { return !backward; }
};

/// Thread-local switch consulted by every op; when set, results never track
/// gradients regardless of their inputs.
bool& grad_disabled();

}  // namespace detail

/// RAII scope that disables graph construction (evaluation passes).
class NoGradGuard {
public:
  NoGradGuard() : previous_(detail::grad_disabled()) { detail::grad_disabled() = true; }
  ~NoGradGuard() { detail::grad_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool previous_;
};

/// Dense row-major array (last axis fastest) with optional gradient tracking.
///
/// Copies share the underlying node, so a Tensor behaves like a handle:
/// parameters referenced from several blocks stay a single graph leaf.
template <typename T>
class Tensor {
public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  Tensor(Shape shape, Vec<T> data, bool requires_grad = false) {
    if (numel(shape) != data.size())
      throw InvalidArgument("tensor data length " + std::to_string(data.size()) +
                            " does not match shape " + shape_str(shape));
    if (!data.allFinite()) throw NumericError("tensor initialised with non-finite data");
    node_ = std::make_shared<detail::Node<T>>();
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const Index n = numel(shape);
    return Tensor(std::move(shape), Vec<T>::Zero(n), requires_grad);
  }
  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const Index n = numel(shape);
    return Tensor(std::move(shape), Vec<T>::Constant(n, value), requires_grad);
  }
  static Tensor scalar(T value, bool requires_grad = false) {
    return full({1}, value, requires_grad);
  }
  static Tensor from(Shape shape, std::initializer_list<T> values, bool requires_grad = false) {
    Vec<T> data(static_cast<Index>(values.size()));
    Index i = 0;
    for (T v : values) data[i++] = v;
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }
  [[nodiscard]] const Shape& shape() const { return node_->shape; }
  [[nodiscard]] Index dim(std::size_t axis) const { return node_->shape.at(axis); }
  [[nodiscard]] std::size_t rank() const { return node_->shape.size(); }
  [[nodiscard]] Index size() const { return node_->value.size(); }
  [[nodiscard]] const Vec<T>& data() const { return node_->value; }
  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }

  /// In-place access for leaves only (optimizer updates, weight surgery).
  Vec<T>& mutable_data() {
    if (!node_->is_leaf()) throw InternalError("mutable_data() on a non-leaf tensor");
    return node_->value;
  }

  [[nodiscard]] bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  /// Zero-filled when nothing has been accumulated yet.
  [[nodiscard]] Vec<T> grad() const {
    return has_grad() ? node_->grad : Vec<T>::Zero(node_->value.size());
  }
  void zero_grad() { node_->grad.resize(0); }

  [[nodiscard]] T item() const {
    if (size() != 1) throw InvalidArgument("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  [[nodiscard]] T at(std::initializer_list<Index> idx) const {
    Index flat = 0;
    std::size_t a = 0;
    for (Index i : idx) flat = flat * node_->shape.at(a++) + i;
    return node_->value[flat];
  }

  /// Same values, no history.
  [[nodiscard]] Tensor detach() const { return Tensor(shape(), data(), false); }

  [[nodiscard]] const NodePtr& node() const { return node_; }

  void backward() const;

private:
  NodePtr node_;
};

/// A named trainable tensor.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<Parameter<T>>;

namespace detail {

void check_finite_or_throw(bool finite, std::string_view op);

/// Wraps an op result. Inputs that do not track gradients are dropped from
/// the graph; when none remain (or grad is disabled) the result is a constant.
template <typename T>
Tensor<T> make_result(std::string_view op, Shape shape, Vec<T> value,
                      std::vector<const Tensor<T>*> inputs, std::function<void(Node<T>&)> backward) {
  check_finite_or_throw(value.allFinite(), op);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (!grad_disabled()) {
    for (const Tensor<T>* t : inputs)
      if (t && t->defined() && t->requires_grad()) node->requires_grad = true;
    if (node->requires_grad) {
      for (const Tensor<T>* t : inputs)
        if (t && t->defined()) node->inputs.push_back(t->node());
      node->backward = std::move(backward);
    }
  }
  return Tensor<T>(std::move(node));
}

/// True when gradient should be accumulated into `t`.
template <typename T>
bool wants_grad(const Tensor<T>& t) {
  return t.defined() && t.requires_grad();
}

}  // namespace detail

/// Reverse-mode sweep from a scalar. Leaf grads accumulate across calls;
/// intermediate grads are recomputed from scratch on every call.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw InvalidArgument("backward() requires a scalar tensor");
  if (!loss.requires_grad()) return;

  using NodeT = detail::Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited{loss.node().get()};
  // Iterative post-order DFS.
  std::vector<std::pair<NodeT*, std::size_t>> stack{{loss.node().get(), 0}};
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (NodeT* n : order)
    if (!n->is_leaf()) n->grad = Vec<T>::Zero(n->value.size());
  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  // Free intermediate buffers; leaves keep their accumulated grads.
  for (NodeT* n : order)
    if (!n->is_leaf()) n->grad.resize(0);
}

template <typename T>
void Tensor<T>::backward() const {
  hfnrv::backward(*this);
}

}  // namespace hfnrv
