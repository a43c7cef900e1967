#include "cdcl/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace cdcl {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
  return os.str();
}

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool on) { grad_mode_enabled = on; }

template <typename T>
void check_finite(std::span<const T> values, const char* what) {
  for (const T v : values) {
    if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite value in ") + what);
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative extent in shape " + shape.str());
  }
  std::vector<T> data(static_cast<std::size_t>(shape.numel()), value);
  return from(shape, std::move(data), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative extent in shape " + shape.str());
  }
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw ShapeError("data length " + std::to_string(values.size()) + " does not match shape " +
                     shape.str());
  }
  check_finite<T>(values, "tensor construction");
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return BasicTensor(std::move(node));
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
  if (!node_->leaf) throw GraphError("in-place write to a non-leaf tensor");
  return node_->data;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
  return node_->data[0];
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool on) {
  if (!node_->leaf) throw GraphError("requires_grad can only be set on leaves");
  node_->requires_grad = on;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  auto node = std::make_shared<Node<T>>();
  node->shape = node_->shape;
  node->data = node_->data;
  return BasicTensor(std::move(node));
}

template <typename T>
void BasicTensor<T>::backward() const {
  if (numel() != 1) throw ShapeError("backward() requires a scalar loss, got " + shape().str());
  if (node_->consumed) throw GraphError("graph already consumed by a previous backward()");
  if (!node_->requires_grad) throw GraphError("loss does not depend on any tensor requiring grad");

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->leaf) {
      check_finite<T>(node->grad, "gradient");
      continue;
    }
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
  for (Node<T>* node : order) {
    if (node->leaf) continue;
    node->consumed = true;
    node->backward_fn = nullptr;
    node->inputs.clear();
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

namespace detail {

template <typename T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                           std::vector<std::shared_ptr<Node<T>>> inputs,
                           std::function<void(Node<T>&)> backward_fn) {
  check_finite<T>(data, op);
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->data = std::move(data);
  node->op = op;
  node->leaf = false;
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(backward_fn);
  }
  return BasicTensor<T>(std::move(node));
}

template BasicTensor<float> make_result(const char*, Shape, std::vector<float>,
                                        std::vector<std::shared_ptr<Node<float>>>,
                                        std::function<void(Node<float>&)>);
template BasicTensor<double> make_result(const char*, Shape, std::vector<double>,
                                         std::vector<std::shared_ptr<Node<double>>>,
                                         std::function<void(Node<double>&)>);

}  // namespace detail

template void check_finite<float>(std::span<const float>, const char*);
template void check_finite<double>(std::span<const double>, const char*);
template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace cdcl
