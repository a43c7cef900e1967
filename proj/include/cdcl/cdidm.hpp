#pragma once

// Implicit degradation modelling: the six-layer estimator, projector and
// predictor heads, the leader/auxiliary branch pair and the contrastive loss.

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "cdcl/nn.hpp"

namespace cdcl::cdidm {

struct EstimatorConfig {
  // Divides every layer width; 1 gives 3->64->64->128->128->256->256.
  int width_divisor = 1;

  int embed_dim() const { return 256 / width_divisor; }
  std::array<int, 6> channels() const;
  void validate() const;
};

struct ContrastiveConfig {
  int divide = 2;  // P
  double tau = 0.07;
  double alpha = 0.001;

  int pairs() const { return divide == 1 ? 1 : divide * divide * (divide * divide - 1) / 2; }
  void validate() const;
};

template <typename T>
struct Estimator {
  std::vector<nn::Conv2d<T>> layers;

  static Estimator make(const EstimatorConfig& cfg, std::mt19937_64& rng);
  // (N, 3, h, w) -> (N, E, h/4, w/4)
  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
  void collect(const std::string& prefix, nn::ParamList<T>& out, bool trainable) const;
};

// Spatial mean per channel: (N, E, h, w) -> (N, E, 1, 1).
template <typename T>
BasicTensor<T> embed(const BasicTensor<T>& r) {
  return global_avg_pool(r);
}

// Dense E->2E, batch norm, GELU, dense 2E->E.
template <typename T>
struct Head {
  nn::Dense<T> fc1;
  nn::BatchNorm<T> bn;
  nn::Dense<T> fc2;

  static Head make(std::int64_t dim, std::mt19937_64& rng);
  BasicTensor<T> operator()(const BasicTensor<T>& x, NormMode mode) const;
  void collect(const std::string& prefix, nn::ParamList<T>& out, bool trainable) const;
};

template <typename T>
struct BranchPair {
  ContrastiveConfig config;
  Estimator<T> leader_estimator;
  Head<T> leader_projector;
  Head<T> predictor;
  Estimator<T> aux_estimator;
  Head<T> aux_projector;

  // The auxiliary branch starts as an exact copy of the leader.
  static BranchPair make(const EstimatorConfig& est, const ContrastiveConfig& con, std::mt19937_64& rng);

  // lr holds B*D patches ordered b*D + d. Returns O as (B*D*K, E, 1, 1) with
  // row (b*D + d)*K + k, every row unit-norm.
  BasicTensor<T> leader_forward(const BasicTensor<T>& lr, NormMode mode = NormMode::Train) const;
  // Returns T as (B*D, E, 1, 1); never records a graph.
  BasicTensor<T> auxiliary_forward(const BasicTensor<T>& lr, NormMode mode = NormMode::Train) const;

  void collect(nn::ParamList<T>& out) const;
};

// theta_aux <- (1 - alpha) theta_aux + alpha theta_leader over estimator and
// projector weights.
template <typename T>
void momentum_update(BranchPair<T>& pair, double alpha);

template <typename T>
struct ContrastiveOutputs {
  BasicTensor<T> o;  // (B*D*K, E, 1, 1)
  BasicTensor<T> t;  // (B*D, E, 1, 1)
  std::int64_t batch = 0;  // B
  std::int64_t views = 0;  // D
  std::int64_t pairs = 0;  // K
  double tau = 0.07;
};

// Mean over rows n of -log softmax_m(o_n . t_m / tau)[n]; o and t are (B, E, 1, 1).
template <typename T>
BasicTensor<T> infonce(const BasicTensor<T>& o, const BasicTensor<T>& t, double tau);

// Average of infonce(O[:, i, k], T[:, j]) over k and ordered pairs i != j.
template <typename T>
BasicTensor<T> contrastive_loss(const ContrastiveOutputs<T>& outs);

}  // namespace cdcl::cdidm
