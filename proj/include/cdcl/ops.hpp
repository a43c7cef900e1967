#pragma once

// Differentiable operations on BasicTensor. Only the vocabulary the networks
// need is provided; broadcasting exists solely as the (N,C,1,1) channel gate.

#include <cstdint>
#include <type_traits>
#include <utility>
#include <vector>

#include "cdcl/kernels.hpp"
#include "cdcl/tensor.hpp"

namespace cdcl {

using kernels::PadMode;

struct Padding {
  PadMode mode = PadMode::Zero;
  std::int64_t width = 0;
};

enum class Activation { Gelu, Sigmoid };

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      std::type_identity_t<const BasicTensor<T>*> bias, std::int64_t stride,
                      Padding pad,
                      std::int64_t groups = 1);

// x is flattened to (N, C*H*W); weight is (Fout, F, 1, 1); result is (N, Fout, 1, 1).
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                     std::type_identity_t<const BasicTensor<T>*> bias);

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& x, Activation kind);
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  return activation(x, Activation::Gelu);
}
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  return activation(x, Activation::Sigmoid);
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& x, std::int64_t r);
template <typename T>
BasicTensor<T> pixel_unshuffle(const BasicTensor<T>& x, std::int64_t r);

// Running statistics are updated in train mode only (momentum 0.1, unbiased
// variance), matching the common framework convention.
template <typename T>
struct BatchNormState {
  BasicTensor<T> running_mean;  // (1,F,1,1)
  BasicTensor<T> running_var;   // (1,F,1,1)
  double momentum = 0.1;
  double eps = 1e-5;
};

enum class NormMode { Train, Eval };

// x is (N,F,1,1); gamma and beta are (1,F,1,1).
template <typename T>
BasicTensor<T> batch_norm1d(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                            const BasicTensor<T>& beta, BatchNormState<T>& state, NormMode mode);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, double factor);
// x (N,C,H,W) times gate (N,C,1,1), the gate broadcast over H x W.
template <typename T>
BasicTensor<T> mul_channel(const BasicTensor<T>& x, const BasicTensor<T>& gate);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);

// Scales each batch item (all C*H*W values) to unit L2 norm.
template <typename T>
BasicTensor<T> l2_normalize(const BasicTensor<T>& x, double eps = 1e-12);

// x holds consecutive groups of `group` items; for every group and every
// (a, b) in pairs emits (x[a] + x[b]) / 2. Output batch = groups * pairs.size().
template <typename T>
BasicTensor<T> pair_mean(const BasicTensor<T>& x, std::int64_t group,
                         const std::vector<std::pair<std::int64_t, std::int64_t>>& pairs);

// Mean absolute error over all elements.
template <typename T>
BasicTensor<T> l1_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

}  // namespace cdcl
