#pragma once

// Parameterised layers shared by the degradation branches and the SR network.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cdcl/ops.hpp"

namespace cdcl::nn {

enum class ParamRole { Weight, RunningStat };

template <typename T>
struct Param {
  std::string name;
  BasicTensor<T> value;
  bool trainable = true;
  ParamRole role = ParamRole::Weight;
};

template <typename T>
using ParamList = std::vector<Param<T>>;

template <typename T>
std::int64_t count_elements(const ParamList<T>& params, bool weights_only = true);

// Weights are drawn from U(-b, b). Default: b = 1/sqrt(fan_in).
// HeUniform: b = sqrt(6/fan_in).
enum class Init { Default, HeUniform };

template <typename T>
struct Conv2d {
  BasicTensor<T> weight;  // (cout, cin/groups, k, k)
  BasicTensor<T> bias;    // (1, cout, 1, 1)
  std::int64_t stride = 1;
  std::int64_t groups = 1;
  Padding pad;

  static Conv2d make(std::int64_t cin, std::int64_t cout, std::int64_t k, std::mt19937_64& rng,
                     std::int64_t stride = 1, std::int64_t groups = 1, Init init = Init::Default);
  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out, bool trainable) const;
  void zero();
};

template <typename T>
struct Dense {
  BasicTensor<T> weight;  // (out, in, 1, 1)
  BasicTensor<T> bias;    // (1, out, 1, 1)

  static Dense make(std::int64_t in, std::int64_t out, std::mt19937_64& rng, Init init = Init::Default);
  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out, bool trainable) const;
  void zero();
};

template <typename T>
struct BatchNorm {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  mutable BatchNormState<T> state;

  static BatchNorm make(std::int64_t features);
  BasicTensor<T> operator()(const BasicTensor<T>& x, NormMode mode) const;
  void collect(const std::string& prefix, ParamList<T>& out, bool trainable) const;
};

// Depthwise 7x7 -> 1x1 C->4C -> GELU -> 1x1 4C->C, optionally plus the input.
template <typename T>
struct ConvNeXtBlock {
  Conv2d<T> depthwise;
  Conv2d<T> expand;
  Conv2d<T> project;
  bool residual = true;

  static ConvNeXtBlock make(std::int64_t channels, std::mt19937_64& rng, bool residual = true);
  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out, bool trainable) const;
};

}  // namespace cdcl::nn
