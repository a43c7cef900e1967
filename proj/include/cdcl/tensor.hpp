#pragma once

// Rank-4 NCHW tensors with a recorded reverse-mode graph.
//
// A BasicTensor is a cheap shared handle onto a graph node. Leaves (inputs and
// parameters) own mutable storage; every op output is immutable and, when any
// input requires a gradient and recording is enabled, carries a closure that
// pushes its output gradient back to its inputs.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cdcl/error.hpp"

namespace cdcl {

struct Shape {
  std::int64_t n = 0, c = 0, h = 0, w = 0;

  constexpr std::int64_t numel() const { return n * c * h * w; }
  constexpr std::int64_t plane() const { return h * w; }
  // Elements per batch item.
  constexpr std::int64_t item() const { return c * h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor from(Shape shape, std::vector<T> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->shape.numel(); }

  std::span<const T> data() const { return node_->data; }
  // Only leaves may be written in place (optimizer steps, initialization).
  std::span<T> mutable_data();
  T item() const;
  T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    const Shape& s = node_->shape;
    return node_->data[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  bool is_leaf() const { return node_->leaf; }
  // A new leaf sharing no graph history with this tensor.
  BasicTensor detach() const;
  BasicTensor clone() const { return detach(); }

  // Reverse-mode sweep from a scalar. Gradients accumulate into every
  // reachable node requiring them; the recorded graph is released afterwards.
  void backward() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }
  explicit BasicTensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Graph recording switch. Recording is on by default per thread.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Throws NonFiniteError naming `what` if any value is NaN or infinite.
template <typename T>
void check_finite(std::span<const T> values, const char* what);

namespace detail {

// Builds an op output. Records inputs and backward closure only when some
// input requires a gradient and recording is enabled.
template <typename T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                           std::vector<std::shared_ptr<Node<T>>> inputs,
                           std::function<void(Node<T>&)> backward_fn);

}  // namespace detail

}  // namespace cdcl
