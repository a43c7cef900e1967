#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cdcl/cdidm.hpp"
#include "cdcl/imaging.hpp"
#include "cdcl/nn.hpp"

namespace cdcl::srnet {

struct SRConfig {
  int channels = 64;  // C
  int n_dags = 6;
  int n_dadaus = 6;
  int scale = 4;
  bool spatial_branch = true;
  bool channel_branch = true;
  bool fc_shared = true;
  bool channel_uses_lr = true;
  bool spatial_uses_lr = false;
  // Gate as sigmoid(h_d + h_f) instead of sigmoid(h_d) + h_f.
  bool sigmoid_over_sum = false;
  bool convnext_residual = true;

  void validate() const;
};

struct ModelConfig {
  cdidm::EstimatorConfig estimator;
  cdidm::ContrastiveConfig contrastive;
  SRConfig sr;

  void validate() const;
};

template <typename T>
struct RegulatorOutput {
  BasicTensor<T> channel;  // (N, C, 1, 1)
  BasicTensor<T> spatial;  // (N, 16, H, W)
};

// Channel path: GAP -> dense E->C -> GELU. Spatial path: pixel shuffle x4 ->
// conv3x3 E/16->16 -> GELU -> conv3x3 16->16.
template <typename T>
struct Regulator {
  nn::Dense<T> channel_fc;
  nn::Conv2d<T> spatial0;
  nn::Conv2d<T> spatial1;

  static Regulator make(int embed_dim, int channels, std::mt19937_64& rng);
  RegulatorOutput<T> operator()(const BasicTensor<T>& r) const;
  void collect(const std::string& prefix, nn::ParamList<T>& out) const;
};

template <typename T>
struct DaDAU {
  SRConfig cfg;
  nn::Conv2d<T> spatial0;    // 16 -> C
  nn::Conv2d<T> spatial1;    // C -> C
  nn::Conv2d<T> spatial_lr;  // C -> C, only with spatial_uses_lr
  nn::Dense<T> fc1;          // C -> C/4
  nn::Dense<T> fc2;          // C/4 -> C
  nn::Dense<T> fc1_feat;     // unshared twins for the feature path
  nn::Dense<T> fc2_feat;
  nn::Conv2d<T> depthwise;   // 3x3, groups = C
  nn::ConvNeXtBlock<T> fuse;

  static DaDAU make(const SRConfig& cfg, std::mt19937_64& rng);
  BasicTensor<T> operator()(const BasicTensor<T>& f, const RegulatorOutput<T>& reg) const;
  void collect(const std::string& prefix, nn::ParamList<T>& out) const;
};

template <typename T>
struct DAG {
  std::vector<DaDAU<T>> units;
  nn::ConvNeXtBlock<T> fuse;
  nn::Conv2d<T> tail;

  static DAG make(const SRConfig& cfg, std::mt19937_64& rng);
  BasicTensor<T> operator()(const BasicTensor<T>& f, const RegulatorOutput<T>& reg) const;
  void collect(const std::string& prefix, nn::ParamList<T>& out) const;
};

template <typename T>
struct DaIDAM {
  std::vector<DAG<T>> groups;
  nn::Conv2d<T> tail;

  static DaIDAM make(const SRConfig& cfg, std::mt19937_64& rng);
  BasicTensor<T> operator()(const BasicTensor<T>& f, const RegulatorOutput<T>& reg) const;
  void collect(const std::string& prefix, nn::ParamList<T>& out) const;
};

template <typename T>
struct Upscaler {
  std::vector<nn::Conv2d<T>> stages;  // each followed by a pixel shuffle
  std::int64_t factor = 2;            // shuffle factor per stage
  nn::Conv2d<T> output;               // C -> 3

  static Upscaler make(int channels, int scale, std::mt19937_64& rng);
  BasicTensor<T> operator()(const BasicTensor<T>& f) const;
  void collect(const std::string& prefix, nn::ParamList<T>& out) const;
};

template <typename T>
struct SRNet {
  SRConfig cfg;
  nn::Conv2d<T> shallow;
  Regulator<T> regulator;
  DaIDAM<T> body;
  Upscaler<T> upscaler;

  static SRNet make(const SRConfig& cfg, int embed_dim, std::mt19937_64& rng);
  // lr (N,3,h,w) and the estimator map R (N,E,h/4,w/4) -> (N,3,s*h,s*w), unclamped.
  BasicTensor<T> operator()(const BasicTensor<T>& lr, const BasicTensor<T>& r) const;
  void collect(const std::string& prefix, nn::ParamList<T>& out) const;
};

// Degradation branches plus the SR network; the SR path uses the leader estimator.
template <typename T>
struct Model {
  ModelConfig cfg;
  cdidm::BranchPair<T> cdidm;
  SRNet<T> sr;

  static Model make(const ModelConfig& cfg, std::uint64_t seed);
  BasicTensor<T> super_resolve(const BasicTensor<T>& lr) const;
  nn::ParamList<T> params() const;
};

// Edge-pads the LR image to a multiple of 4, runs the model without recording
// a graph, then crops and clamps the result.
imaging::Image sr_forward(const imaging::Image& lr, const Model<float>& model);

}  // namespace cdcl::srnet
