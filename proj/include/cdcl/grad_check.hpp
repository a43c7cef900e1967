#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "cdcl/tensor.hpp"

namespace cdcl {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::int64_t coordinates = 0;
};

// Compares analytic gradients of the scalar `loss_fn` with central finite
// differences on up to `samples` random coordinates of every tensor in
// `params` (all coordinates when fewer exist). The relative error of one
// coordinate is |a - n| / max(|a|, |n|, floor).
//
// Instantiate with double tensors: a 32-bit forward pass cannot resolve a
// 1e-4 step to the 1e-3 relative accuracy the checks demand.
template <typename T, typename LossFn>
GradCheckResult grad_check(LossFn&& loss_fn,
                           std::vector<BasicTensor<T>> params, double eps, std::uint64_t seed,
                           std::int64_t samples = 64, double floor = 1e-6) {
  if (eps < 1e-4 * 0.999 || eps > 1e-2) throw Error("grad_check: eps must lie in [1e-4, 1e-2]");
  for (auto& p : params) p.zero_grad();
  loss_fn().backward();
  std::vector<std::vector<T>> analytic;
  for (auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
    }
  }

  std::mt19937_64 rng(seed);
  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_data();
    std::vector<std::int64_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (static_cast<std::int64_t>(coords.size()) > samples) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(samples));
    }
    for (const std::int64_t i : coords) {
      const T original = values[i];
      values[i] = static_cast<T>(original + eps);
      const double plus = loss_fn().item();
      values[i] = static_cast<T>(original - eps);
      const double minus = loss_fn().item();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[k][i];
      if (!std::isfinite(numeric)) throw NonFiniteError("grad_check: non-finite finite difference");
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
      ++result.coordinates;
    }
  }
  return result;
}

}  // namespace cdcl
