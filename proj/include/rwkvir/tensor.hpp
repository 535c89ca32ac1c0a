#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared node. Ops produce new nodes; when
// gradient recording is on and any input requires a gradient, the node keeps
// its inputs and a backward closure. Node creation order is a topological
// order of the graph, so backward() replays the reachable nodes sorted by
// descending sequence number.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rwkvir/error.hpp"

namespace rwkvir {

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr Dtype dtype_of();
template <>
constexpr Dtype dtype_of<float>() { return Dtype::f32; }
template <>
constexpr Dtype dtype_of<double>() { return Dtype::f64; }

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  bool released = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(std::span<const T>)> backward_fn;

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

std::uint64_t next_seq();

}  // namespace detail

/// Thread-local switch for graph recording. Inference paths wrap themselves
/// in a NoGradGuard so no closures or inputs are retained.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  static constexpr Dtype dtype() { return dtype_of<T>(); }

  std::span<const T> data() const { return node_->value; }
  /// Writable values. Only meaningful on leaves (parameters, inputs); the
  /// optimizer and finite-difference probes use it between forward passes.
  std::span<T> mutable_data() { return node_->value; }
  const T& operator[](std::size_t i) const { return node_->value[i]; }
  T item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Gradient buffer; zeros when nothing has been accumulated yet.
  std::span<const T> grad() const;
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  /// Fresh leaf holding a copy of the values, detached from any graph.
  Tensor detach() const;
  Tensor clone() const;

  const NodePtr& node() const { return node_; }
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Builds the output of a differentiable op. The closure receives the output
/// gradient and must accumulate into the inputs' gradient buffers; it is
/// dropped (and the inputs not retained) when nothing needs a gradient.
template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> value, std::initializer_list<Tensor<T>> inputs,
                         std::function<void(std::span<const T>)> backward_fn);

/// Reverse-mode sweep from a scalar loss. Populates grad() on every reachable
/// tensor that requires a gradient. The graph is released afterwards; running
/// backward again over any released node throws ContractError.
template <typename T>
void backward(const Tensor<T>& loss);

/// Accumulates src into the gradient of `t` if it requires one.
template <typename T>
inline void accumulate_grad(const std::shared_ptr<detail::Node<T>>& node, std::span<const T> src) {
  if (!node->requires_grad) return;
  auto g = node->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
}

}  // namespace rwkvir
