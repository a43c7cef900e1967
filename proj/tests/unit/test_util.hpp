#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cdcl/ops.hpp"
#include "cdcl/tensor.hpp"

namespace cdcl::testing {

template <typename T>
BasicTensor<T> random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = false,
                             double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(static_cast<std::size_t>(shape.numel()));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return BasicTensor<T>::from(shape, std::move(v), requires_grad);
}

// Scalar probe sum(y * r) with fixed random weights r, so every output
// coordinate contributes a distinct weight to the gradient.
template <typename T>
BasicTensor<T> probe(const BasicTensor<T>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto r = random_tensor<T>(y.shape(), rng);
  return sum(mul(y, r));
}

}  // namespace cdcl::testing
