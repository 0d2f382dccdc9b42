#include "dal/tensorcore/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "dal/common/error.hpp"

namespace dal::tc {

namespace {
thread_local bool g_grad_enabled = true;
}

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value.assign(static_cast<std::size_t>(tc::numel(shape)), value);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

template <class T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  if (static_cast<std::int64_t>(data.size()) != tc::numel(shape))
    throw ShapeError("from_data: " + std::to_string(data.size()) + " values for shape " +
                     to_string(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

template <class T>
std::int64_t Tensor<T>::dim(int i) const {
  const int nd = ndim();
  if (i < 0) i += nd;
  if (i < 0 || i >= nd)
    throw ShapeError("dim: index " + std::to_string(i) + " out of range for shape " +
                     to_string(shape()));
  return node_->shape[i];
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not scalar");
  return node_->value[0];
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return from_data(shape(), node_->value, false);
}

template <class T>
Tensor<T> Tensor<T>::reshape(Shape new_shape) const {
  if (tc::numel(new_shape) != numel())
    throw ShapeError("reshape: cannot view " + to_string(shape()) + " as " + to_string(new_shape));
  return make_op<T>("reshape", std::move(new_shape), node_->value, {*this}, [](Node& self) {
    auto& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <class T>
Tensor<T> make_op(const char* name, Shape shape, std::vector<T> value,
                  const std::vector<Tensor<T>>& inputs,
                  std::function<void(detail::Node<T>&)> backward) {
  auto n = std::make_shared<detail::Node<T>>();
  n->op = name;
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(inputs.size());
      for (const auto& in : inputs) n->parents.push_back(in.node());
      n->backward = std::move(backward);
    }
  }
  return Tensor<T>(std::move(n));
}

template <class T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  using N = detail::Node<T>;
  std::vector<N*> order;
  std::unordered_set<N*> seen;
  std::vector<std::pair<N*, std::size_t>> stack;
  N* root = loss.node().get();
  if (!root->requires_grad) return;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      N* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    N* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  // Interior gradients are consumed; only leaves keep theirs.
  for (N* node : order)
    if (node->backward) node->grad = std::vector<T>();
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_op(const char*, Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                               std::function<void(detail::Node<float>&)>);
template Tensor<double> make_op(const char*, Shape, std::vector<double>,
                                const std::vector<Tensor<double>>&,
                                std::function<void(detail::Node<double>&)>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace dal::tc
