#include "cdcl/nn.hpp"

#include <cmath>

namespace cdcl::nn {

namespace {

template <typename T>
BasicTensor<T> uniform_leaf(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<T> values(static_cast<std::size_t>(shape.numel()));
  for (auto& v : values) v = static_cast<T>(u(rng));
  return BasicTensor<T>::from(shape, std::move(values), true);
}

double init_bound(double fan_in, Init init) {
  return init == Init::HeUniform ? std::sqrt(6.0 / fan_in) : 1.0 / std::sqrt(fan_in);
}

template <typename T>
void add_param(ParamList<T>& out, const std::string& name, const BasicTensor<T>& value, bool trainable,
               ParamRole role = ParamRole::Weight) {
  out.push_back({name, value, trainable && role == ParamRole::Weight, role});
}

template <typename T>
void fill_zero(BasicTensor<T>& t) {
  for (auto& v : t.mutable_data()) v = T(0);
}

}  // namespace

template <typename T>
std::int64_t count_elements(const ParamList<T>& params, bool weights_only) {
  std::int64_t n = 0;
  for (const auto& p : params)
    if (!weights_only || p.role == ParamRole::Weight) n += p.value.numel();
  return n;
}

template <typename T>
Conv2d<T> Conv2d<T>::make(std::int64_t cin, std::int64_t cout, std::int64_t k, std::mt19937_64& rng,
                          std::int64_t stride, std::int64_t groups, Init init) {
  Conv2d c;
  const double fan_in = static_cast<double>(cin / groups * k * k);
  c.weight = uniform_leaf<T>(Shape{cout, cin / groups, k, k}, init_bound(fan_in, init), rng);
  c.bias = BasicTensor<T>::zeros(Shape{1, cout, 1, 1}, true);
  c.stride = stride;
  c.groups = groups;
  c.pad = Padding{PadMode::Zero, k / 2};
  return c;
}

template <typename T>
BasicTensor<T> Conv2d<T>::operator()(const BasicTensor<T>& x) const {
  return conv2d(x, weight, &bias, stride, pad, groups);
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, ParamList<T>& out, bool trainable) const {
  add_param(out, prefix + ".weight", weight, trainable);
  add_param(out, prefix + ".bias", bias, trainable);
}

template <typename T>
void Conv2d<T>::zero() {
  fill_zero(weight);
  fill_zero(bias);
}

template <typename T>
Dense<T> Dense<T>::make(std::int64_t in, std::int64_t out, std::mt19937_64& rng, Init init) {
  Dense d;
  d.weight = uniform_leaf<T>(Shape{out, in, 1, 1}, init_bound(static_cast<double>(in), init), rng);
  d.bias = BasicTensor<T>::zeros(Shape{1, out, 1, 1}, true);
  return d;
}

template <typename T>
BasicTensor<T> Dense<T>::operator()(const BasicTensor<T>& x) const {
  return dense(x, weight, &bias);
}

template <typename T>
void Dense<T>::collect(const std::string& prefix, ParamList<T>& out, bool trainable) const {
  add_param(out, prefix + ".weight", weight, trainable);
  add_param(out, prefix + ".bias", bias, trainable);
}

template <typename T>
void Dense<T>::zero() {
  fill_zero(weight);
  fill_zero(bias);
}

template <typename T>
BatchNorm<T> BatchNorm<T>::make(std::int64_t features) {
  BatchNorm b;
  const Shape s{1, features, 1, 1};
  b.gamma = BasicTensor<T>::full(s, T(1), true);
  b.beta = BasicTensor<T>::zeros(s, true);
  b.state.running_mean = BasicTensor<T>::zeros(s);
  b.state.running_var = BasicTensor<T>::full(s, T(1));
  return b;
}

template <typename T>
BasicTensor<T> BatchNorm<T>::operator()(const BasicTensor<T>& x, NormMode mode) const {
  return batch_norm1d(x, gamma, beta, state, mode);
}

template <typename T>
void BatchNorm<T>::collect(const std::string& prefix, ParamList<T>& out, bool trainable) const {
  add_param(out, prefix + ".gamma", gamma, trainable);
  add_param(out, prefix + ".beta", beta, trainable);
  add_param(out, prefix + ".running_mean", state.running_mean, false, ParamRole::RunningStat);
  add_param(out, prefix + ".running_var", state.running_var, false, ParamRole::RunningStat);
}

template <typename T>
ConvNeXtBlock<T> ConvNeXtBlock<T>::make(std::int64_t channels, std::mt19937_64& rng, bool residual) {
  ConvNeXtBlock b;
  b.depthwise = Conv2d<T>::make(channels, channels, 7, rng, 1, channels);
  b.expand = Conv2d<T>::make(channels, 4 * channels, 1, rng);
  b.project = Conv2d<T>::make(4 * channels, channels, 1, rng);
  b.residual = residual;
  return b;
}

template <typename T>
BasicTensor<T> ConvNeXtBlock<T>::operator()(const BasicTensor<T>& x) const {
  const auto y = project(gelu(expand(depthwise(x))));
  return residual ? add(x, y) : y;
}

template <typename T>
void ConvNeXtBlock<T>::collect(const std::string& prefix, ParamList<T>& out, bool trainable) const {
  depthwise.collect(prefix + ".dw", out, trainable);
  expand.collect(prefix + ".pw1", out, trainable);
  project.collect(prefix + ".pw2", out, trainable);
}

#define CDCL_INSTANTIATE_NN(T)                                                       \
  template std::int64_t count_elements<T>(const ParamList<T>&, bool);               \
  template struct Conv2d<T>;                                                         \
  template struct Dense<T>;                                                          \
  template struct BatchNorm<T>;                                                      \
  template struct ConvNeXtBlock<T>;

CDCL_INSTANTIATE_NN(float)
CDCL_INSTANTIATE_NN(double)

}  // namespace cdcl::nn
