#include "cdcl/srnet.hpp"

namespace cdcl::srnet {

void SRConfig::validate() const {
  if (channels < 4 || channels % 4 != 0) throw ConfigError("model.channels must be a positive multiple of 4");
  if (n_dags < 1) throw ConfigError("model.n_dags must be >= 1");
  if (n_dadaus < 1) throw ConfigError("model.n_dadaus must be >= 1");
  if (scale < 2 || scale > 4) throw ConfigError("scale must be 2, 3 or 4");
  if (!spatial_branch && !channel_branch) throw ConfigError("at least one DaDAU branch must be enabled");
}

void ModelConfig::validate() const {
  estimator.validate();
  contrastive.validate();
  sr.validate();
}

template <typename T>
Regulator<T> Regulator<T>::make(int embed_dim, int channels, std::mt19937_64& rng) {
  Regulator r;
  r.channel_fc = nn::Dense<T>::make(embed_dim, channels, rng);
  r.spatial0 = nn::Conv2d<T>::make(embed_dim / 16, 16, 3, rng);
  r.spatial1 = nn::Conv2d<T>::make(16, 16, 3, rng);
  return r;
}

template <typename T>
RegulatorOutput<T> Regulator<T>::operator()(const BasicTensor<T>& r) const {
  RegulatorOutput<T> out;
  out.channel = gelu(channel_fc(global_avg_pool(r)));
  out.spatial = spatial1(gelu(spatial0(pixel_shuffle(r, 4))));
  return out;
}

template <typename T>
void Regulator<T>::collect(const std::string& prefix, nn::ParamList<T>& out) const {
  channel_fc.collect(prefix + ".channel_fc", out, true);
  spatial0.collect(prefix + ".spatial0", out, true);
  spatial1.collect(prefix + ".spatial1", out, true);
}

template <typename T>
DaDAU<T> DaDAU<T>::make(const SRConfig& cfg, std::mt19937_64& rng) {
  DaDAU u;
  u.cfg = cfg;
  const int c = cfg.channels;
  if (cfg.spatial_branch) {
    u.spatial0 = nn::Conv2d<T>::make(16, c, 3, rng);
    u.spatial1 = nn::Conv2d<T>::make(c, c, 3, rng);
    if (cfg.spatial_uses_lr) u.spatial_lr = nn::Conv2d<T>::make(c, c, 3, rng);
  }
  if (cfg.channel_branch) {
    u.fc1 = nn::Dense<T>::make(c, c / 4, rng);
    u.fc2 = nn::Dense<T>::make(c / 4, c, rng);
    if (cfg.channel_uses_lr && !cfg.fc_shared) {
      u.fc1_feat = nn::Dense<T>::make(c, c / 4, rng);
      u.fc2_feat = nn::Dense<T>::make(c / 4, c, rng);
    }
    u.depthwise = nn::Conv2d<T>::make(c, c, 3, rng, 1, c);
  }
  u.fuse = nn::ConvNeXtBlock<T>::make(c, rng, cfg.convnext_residual);
  return u;
}

template <typename T>
BasicTensor<T> DaDAU<T>::operator()(const BasicTensor<T>& f, const RegulatorOutput<T>& reg) const {
  BasicTensor<T> merged;
  if (cfg.spatial_branch) {
    auto pre = spatial1(gelu(spatial0(reg.spatial)));
    if (cfg.spatial_uses_lr) pre = add(pre, spatial_lr(f));
    merged = mul(sigmoid(pre), f);
  }
  if (cfg.channel_branch) {
    const auto h_d = fc2(gelu(fc1(reg.channel)));
    BasicTensor<T> gate;
    if (cfg.channel_uses_lr) {
      const bool shared = cfg.fc_shared;
      const auto pooled = global_avg_pool(f);
      const auto h_f = shared ? fc2(gelu(fc1(pooled))) : fc2_feat(gelu(fc1_feat(pooled)));
      gate = cfg.sigmoid_over_sum ? sigmoid(add(h_d, h_f)) : add(sigmoid(h_d), h_f);
    } else {
      gate = sigmoid(h_d);
    }
    const auto f_c = depthwise(mul_channel(f, gate));
    merged = merged.defined() ? add(merged, f_c) : f_c;
  }
  return add(fuse(merged), f);
}

template <typename T>
void DaDAU<T>::collect(const std::string& prefix, nn::ParamList<T>& out) const {
  if (cfg.spatial_branch) {
    spatial0.collect(prefix + ".spatial0", out, true);
    spatial1.collect(prefix + ".spatial1", out, true);
    if (cfg.spatial_uses_lr) spatial_lr.collect(prefix + ".spatial_lr", out, true);
  }
  if (cfg.channel_branch) {
    fc1.collect(prefix + ".fc1", out, true);
    fc2.collect(prefix + ".fc2", out, true);
    if (cfg.channel_uses_lr && !cfg.fc_shared) {
      fc1_feat.collect(prefix + ".fc1_feat", out, true);
      fc2_feat.collect(prefix + ".fc2_feat", out, true);
    }
    depthwise.collect(prefix + ".dw", out, true);
  }
  fuse.collect(prefix + ".fuse", out, true);
}

template <typename T>
DAG<T> DAG<T>::make(const SRConfig& cfg, std::mt19937_64& rng) {
  DAG g;
  for (int i = 0; i < cfg.n_dadaus; ++i) g.units.push_back(DaDAU<T>::make(cfg, rng));
  g.fuse = nn::ConvNeXtBlock<T>::make(cfg.channels, rng, cfg.convnext_residual);
  g.tail = nn::Conv2d<T>::make(cfg.channels, cfg.channels, 3, rng);
  return g;
}

template <typename T>
BasicTensor<T> DAG<T>::operator()(const BasicTensor<T>& f, const RegulatorOutput<T>& reg) const {
  BasicTensor<T> x = f;
  for (const auto& u : units) x = u(x, reg);
  return add(tail(fuse(x)), f);
}

template <typename T>
void DAG<T>::collect(const std::string& prefix, nn::ParamList<T>& out) const {
  for (std::size_t i = 0; i < units.size(); ++i) units[i].collect(prefix + ".dadau" + std::to_string(i), out);
  fuse.collect(prefix + ".fuse", out, true);
  tail.collect(prefix + ".tail", out, true);
}

template <typename T>
DaIDAM<T> DaIDAM<T>::make(const SRConfig& cfg, std::mt19937_64& rng) {
  DaIDAM m;
  for (int i = 0; i < cfg.n_dags; ++i) m.groups.push_back(DAG<T>::make(cfg, rng));
  m.tail = nn::Conv2d<T>::make(cfg.channels, cfg.channels, 3, rng);
  return m;
}

template <typename T>
BasicTensor<T> DaIDAM<T>::operator()(const BasicTensor<T>& f, const RegulatorOutput<T>& reg) const {
  BasicTensor<T> x = f;
  for (const auto& g : groups) x = g(x, reg);
  return add(tail(x), f);
}

template <typename T>
void DaIDAM<T>::collect(const std::string& prefix, nn::ParamList<T>& out) const {
  for (std::size_t i = 0; i < groups.size(); ++i) groups[i].collect(prefix + ".dag" + std::to_string(i), out);
  tail.collect(prefix + ".tail", out, true);
}

template <typename T>
Upscaler<T> Upscaler<T>::make(int channels, int scale, std::mt19937_64& rng) {
  Upscaler u;
  switch (scale) {
    case 2:
      u.factor = 2;
      u.stages.push_back(nn::Conv2d<T>::make(channels, 4 * channels, 3, rng));
      break;
    case 3:
      u.factor = 3;
      u.stages.push_back(nn::Conv2d<T>::make(channels, 9 * channels, 3, rng));
      break;
    case 4:
      u.factor = 2;
      u.stages.push_back(nn::Conv2d<T>::make(channels, 4 * channels, 3, rng));
      u.stages.push_back(nn::Conv2d<T>::make(channels, 4 * channels, 3, rng));
      break;
    default:
      throw ConfigError("unsupported scale " + std::to_string(scale));
  }
  u.output = nn::Conv2d<T>::make(channels, 3, 3, rng);
  return u;
}

template <typename T>
BasicTensor<T> Upscaler<T>::operator()(const BasicTensor<T>& f) const {
  BasicTensor<T> x = f;
  for (const auto& s : stages) x = pixel_shuffle(s(x), factor);
  return output(x);
}

template <typename T>
void Upscaler<T>::collect(const std::string& prefix, nn::ParamList<T>& out) const {
  for (std::size_t i = 0; i < stages.size(); ++i) stages[i].collect(prefix + ".stage" + std::to_string(i), out, true);
  output.collect(prefix + ".output", out, true);
}

template <typename T>
SRNet<T> SRNet<T>::make(const SRConfig& cfg, int embed_dim, std::mt19937_64& rng) {
  cfg.validate();
  if (embed_dim % 16 != 0) throw ConfigError("embedding dim must be divisible by 16 for the spatial regulator");
  SRNet n;
  n.cfg = cfg;
  n.shallow = nn::Conv2d<T>::make(3, cfg.channels, 3, rng);
  n.regulator = Regulator<T>::make(embed_dim, cfg.channels, rng);
  n.body = DaIDAM<T>::make(cfg, rng);
  n.upscaler = Upscaler<T>::make(cfg.channels, cfg.scale, rng);
  return n;
}

template <typename T>
BasicTensor<T> SRNet<T>::operator()(const BasicTensor<T>& lr, const BasicTensor<T>& r) const {
  const auto reg = regulator(r);
  if (reg.spatial.shape().h != lr.shape().h || reg.spatial.shape().w != lr.shape().w) {
    throw ShapeError("SR input and degradation map disagree: " + lr.shape().str() + " vs " + r.shape().str());
  }
  return upscaler(body(shallow(lr), reg));
}

template <typename T>
void SRNet<T>::collect(const std::string& prefix, nn::ParamList<T>& out) const {
  shallow.collect(prefix + ".shallow", out, true);
  regulator.collect(prefix + ".regulator", out);
  body.collect(prefix + ".body", out);
  upscaler.collect(prefix + ".upscaler", out);
}

template <typename T>
Model<T> Model<T>::make(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  Model m;
  m.cfg = cfg;
  m.cdidm = cdidm::BranchPair<T>::make(cfg.estimator, cfg.contrastive, rng);
  m.sr = SRNet<T>::make(cfg.sr, cfg.estimator.embed_dim(), rng);
  return m;
}

template <typename T>
BasicTensor<T> Model<T>::super_resolve(const BasicTensor<T>& lr) const {
  return sr(lr, cdidm.leader_estimator(lr));
}

template <typename T>
nn::ParamList<T> Model<T>::params() const {
  nn::ParamList<T> out;
  cdidm.collect(out);
  sr.collect("sr", out);
  return out;
}

imaging::Image sr_forward(const imaging::Image& lr, const Model<float>& model) {
  const int pw = (lr.width + 3) / 4 * 4;
  const int ph = (lr.height + 3) / 4 * 4;
  const imaging::Image padded = (pw == lr.width && ph == lr.height) ? lr : imaging::pad_edge(lr, pw, ph);
  imaging::Image rgb = padded;
  if (padded.channels == 1) {
    rgb = imaging::Image(pw, ph, 3);
    for (std::size_t p = 0; p < padded.data.size(); ++p)
      for (int c = 0; c < 3; ++c) rgb.data[p * 3 + static_cast<std::size_t>(c)] = padded.data[p];
  }
  NoGradGuard no_grad;
  const Tensor out = model.super_resolve(imaging::to_tensor(rgb));
  const imaging::Image full = imaging::from_tensor(out, 0);
  const int s = model.cfg.sr.scale;
  imaging::Image cropped = imaging::crop(full, 0, 0, lr.width * s, lr.height * s);
  if (lr.channels == 1) {
    imaging::Image gray(cropped.width, cropped.height, 1);
    for (std::size_t p = 0; p < gray.data.size(); ++p) gray.data[p] = cropped.data[p * 3];
    return gray;
  }
  return cropped;
}

#define CDCL_INSTANTIATE_SRNET(T) \
  template struct Regulator<T>;   \
  template struct DaDAU<T>;       \
  template struct DAG<T>;         \
  template struct DaIDAM<T>;      \
  template struct Upscaler<T>;    \
  template struct SRNet<T>;       \
  template struct Model<T>;

CDCL_INSTANTIATE_SRNET(float)
CDCL_INSTANTIATE_SRNET(double)

}  // namespace cdcl::srnet
