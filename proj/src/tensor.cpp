#include "rwkvir/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace rwkvir {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

namespace detail {
std::uint64_t next_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}
}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::vector<T> data(numel_of(shape), value);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  if (numel_of(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape) + " needs " +
                         std::to_string(numel_of(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  node->seq = detail::next_seq();
  return Tensor(std::move(node));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item(): tensor has " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!node_->is_leaf) throw ContractError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return node_->grad_buffer();
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_data(node_->shape, node_->value, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return from_data(node_->shape, node_->value, node_->requires_grad && node_->is_leaf);
}

template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> value, std::initializer_list<Tensor<T>> inputs,
                         std::function<void(std::span<const T>)> backward_fn) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->seq = detail::next_seq();
  node->is_leaf = false;
  bool any = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) any = any || in.requires_grad();
  }
  if (any) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  if (!loss.requires_grad()) {
    throw MissingGradientError("backward: loss is not connected to any tensor that requires a gradient");
  }
  using NodeT = detail::Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::shared_ptr<NodeT>> owners;
  std::vector<NodeT*> stack{loss.node().get()};
  while (!stack.empty()) {
    NodeT* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    if (n->released) {
      throw ContractError("backward: graph was already consumed by a previous backward(); rebuild the forward pass");
    }
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad) {
        owners.push_back(in);
        stack.push_back(in.get());
      }
    }
  }
  std::sort(order.begin(), order.end(), [](const NodeT* a, const NodeT* b) { return a->seq > b->seq; });

  loss.node()->grad_buffer()[0] += T(1);
  for (NodeT* n : order) {
    if (n->backward_fn) n->backward_fn(n->grad_buffer());
  }
  for (NodeT* n : order) {
    if (!n->is_leaf) {
      n->backward_fn = nullptr;
      n->inputs.clear();
      n->released = true;
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_op_result(Shape, std::vector<float>, std::initializer_list<Tensor<float>>,
                                      std::function<void(std::span<const float>)>);
template Tensor<double> make_op_result(Shape, std::vector<double>, std::initializer_list<Tensor<double>>,
                                       std::function<void(std::span<const double>)>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace rwkvir
