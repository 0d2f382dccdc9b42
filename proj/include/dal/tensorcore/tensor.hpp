#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dal::tc {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something is accumulated
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Thread-local switch for graph recording. Disabled inside a NoGradGuard.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor with an optional autograd record. Copies share the
/// underlying node.
template <class T>
class Tensor {
 public:
  using Node = detail::Node<T>;
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value) { return from_data({}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  /// Extent of dimension `i`; negative values count from the back.
  std::int64_t dim(int i) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

  std::span<const T> data() const { return node_->value; }
  /// Mutable access for leaves (parameters, inputs).
  std::span<T> data_mut() { return node_->value; }
  T item() const;
  T at(std::int64_t flat) const { return node_->value[flat]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient view; empty when nothing was accumulated.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_mut() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  /// Same values, no history.
  Tensor detach() const;
  /// Differentiable reshape; the element count must be preserved.
  Tensor reshape(Shape shape) const;

  const char* op_name() const { return node_->op; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds a graph node. When recording is enabled and any input requires a
/// gradient, `backward` is attached; it reads `self.grad` and accumulates into
/// `self.parents[i]->grad_buffer()` for parents that require a gradient.
template <class T>
Tensor<T> make_op(const char* name, Shape shape, std::vector<T> value,
                  const std::vector<Tensor<T>>& inputs,
                  std::function<void(detail::Node<T>&)> backward);

/// Reverse-mode sweep from a scalar. Each reachable node's rule runs once;
/// leaf gradients accumulate across calls until `zero_grad`.
template <class T>
void backward(const Tensor<T>& loss);

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace dal::tc
