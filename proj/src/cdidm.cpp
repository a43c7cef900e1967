#include "cdcl/cdidm.hpp"

#include <algorithm>
#include <cmath>

#include "cdcl/sampler.hpp"

namespace cdcl::cdidm {

std::array<int, 6> EstimatorConfig::channels() const {
  return {64 / width_divisor, 64 / width_divisor, 128 / width_divisor,
          128 / width_divisor, 256 / width_divisor, 256 / width_divisor};
}

void EstimatorConfig::validate() const {
  if (width_divisor != 1 && width_divisor != 2 && width_divisor != 4) {
    throw ConfigError("estimator width divisor must be 1, 2 or 4");
  }
}

void ContrastiveConfig::validate() const {
  if (divide < 1) throw ConfigError("divide parameter P must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("momentum alpha must lie in [0, 1]");
}

template <typename T>
Estimator<T> Estimator<T>::make(const EstimatorConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  Estimator e;
  int in = 3;
  const auto plan = cfg.channels();
  for (int i = 0; i < 6; ++i) {
    const std::int64_t stride = (i == 1 || i == 3) ? 2 : 1;
    e.layers.push_back(nn::Conv2d<T>::make(in, plan[static_cast<std::size_t>(i)], 3, rng, stride, 1, nn::Init::HeUniform));
    in = plan[static_cast<std::size_t>(i)];
  }
  return e;
}

template <typename T>
BasicTensor<T> Estimator<T>::operator()(const BasicTensor<T>& x) const {
  if (x.shape().h % 4 != 0 || x.shape().w % 4 != 0) {
    throw ShapeError("estimator input dims must be divisible by 4, got " + x.shape().str());
  }
  BasicTensor<T> y = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    y = layers[i](y);
    if (i + 1 < layers.size()) y = gelu(y);
  }
  return y;
}

template <typename T>
void Estimator<T>::collect(const std::string& prefix, nn::ParamList<T>& out, bool trainable) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".conv" + std::to_string(i), out, trainable);
}

template <typename T>
Head<T> Head<T>::make(std::int64_t dim, std::mt19937_64& rng) {
  Head h;
  h.fc1 = nn::Dense<T>::make(dim, 2 * dim, rng, nn::Init::HeUniform);
  h.bn = nn::BatchNorm<T>::make(2 * dim);
  h.fc2 = nn::Dense<T>::make(2 * dim, dim, rng, nn::Init::HeUniform);
  return h;
}

template <typename T>
BasicTensor<T> Head<T>::operator()(const BasicTensor<T>& x, NormMode mode) const {
  return fc2(gelu(bn(fc1(x), mode)));
}

template <typename T>
void Head<T>::collect(const std::string& prefix, nn::ParamList<T>& out, bool trainable) const {
  fc1.collect(prefix + ".fc1", out, trainable);
  bn.collect(prefix + ".bn", out, trainable);
  fc2.collect(prefix + ".fc2", out, trainable);
}

template <typename T>
BranchPair<T> BranchPair<T>::make(const EstimatorConfig& est, const ContrastiveConfig& con, std::mt19937_64& rng) {
  con.validate();
  BranchPair p;
  p.config = con;
  std::mt19937_64 twin = rng;
  p.leader_estimator = Estimator<T>::make(est, rng);
  p.leader_projector = Head<T>::make(est.embed_dim(), rng);
  p.aux_estimator = Estimator<T>::make(est, twin);
  p.aux_projector = Head<T>::make(est.embed_dim(), twin);
  p.predictor = Head<T>::make(est.embed_dim(), rng);
  nn::ParamList<T> aux;
  p.aux_estimator.collect("", aux, false);
  p.aux_projector.collect("", aux, false);
  for (auto& a : aux)
    if (a.value.requires_grad()) a.value.set_requires_grad(false);
  return p;
}

template <typename T>
BasicTensor<T> BranchPair<T>::leader_forward(const BasicTensor<T>& lr, NormMode mode) const {
  const int p = config.divide;
  if (lr.shape().h % (4 * p) != 0 || lr.shape().w % (4 * p) != 0) {
    throw ShapeError("leader_forward: patch side must be divisible by 4P");
  }
  BasicTensor<T> blocks = lr;
  if (p > 1) blocks = sampler::divide_batch(lr, p);
  const auto features = embed(leader_estimator(blocks));
  const auto pairs = p == 1 ? std::vector<std::pair<std::int64_t, std::int64_t>>{{0, 0}} : sampler::pair_indices(p * p);
  const auto combined = pair_mean(features, static_cast<std::int64_t>(p) * p, pairs);
  return l2_normalize(predictor(leader_projector(combined, mode), mode));
}

template <typename T>
BasicTensor<T> BranchPair<T>::auxiliary_forward(const BasicTensor<T>& lr, NormMode mode) const {
  NoGradGuard no_grad;
  return l2_normalize(aux_projector(embed(aux_estimator(lr)), mode));
}

template <typename T>
void BranchPair<T>::collect(nn::ParamList<T>& out) const {
  leader_estimator.collect("leader.estimator", out, true);
  leader_projector.collect("leader.projector", out, true);
  predictor.collect("leader.predictor", out, true);
  aux_estimator.collect("aux.estimator", out, false);
  aux_projector.collect("aux.projector", out, false);
}

template <typename T>
void momentum_update(BranchPair<T>& pair, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("momentum alpha must lie in [0, 1]");
  nn::ParamList<T> leader, aux;
  pair.leader_estimator.collect("", leader, true);
  pair.leader_projector.collect("", leader, true);
  pair.aux_estimator.collect("", aux, false);
  pair.aux_projector.collect("", aux, false);
  if (leader.size() != aux.size()) throw ShapeError("momentum_update: branch structures differ");
  for (std::size_t i = 0; i < leader.size(); ++i) {
    if (leader[i].role != nn::ParamRole::Weight) continue;
    if (!(leader[i].value.shape() == aux[i].value.shape())) {
      throw ShapeError("momentum_update: shape mismatch for " + leader[i].name);
    }
    const auto src = leader[i].value.data();
    auto dst = aux[i].value.mutable_data();
    for (std::size_t k = 0; k < dst.size(); ++k) {
      dst[k] = static_cast<T>((1.0 - alpha) * static_cast<double>(dst[k]) + alpha * static_cast<double>(src[k]));
    }
  }
}

namespace {

// One InfoNCE term: row n of the slice is o[o_offset + n*o_stride] and
// t[t_offset + n*t_stride].
struct Term {
  std::int64_t o_offset, o_stride, t_offset, t_stride;
};

template <typename T>
void require_unit_rows(const BasicTensor<T>& x, const char* what) {
  const std::int64_t e = x.shape().item();
  const auto d = x.data();
  for (std::int64_t r = 0; r < x.shape().n; ++r) {
    double sq = 0.0;
    for (std::int64_t i = 0; i < e; ++i) sq += static_cast<double>(d[static_cast<std::size_t>(r * e + i)]) * d[static_cast<std::size_t>(r * e + i)];
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-3) throw Error(std::string(what) + ": rows must be L2-normalized");
  }
}

template <typename T>
BasicTensor<T> fused_infonce(const BasicTensor<T>& o, const BasicTensor<T>& t, std::int64_t batch,
                             std::vector<Term> terms, double normalizer, double tau, const char* name) {
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
  if (o.shape().item() != t.shape().item()) throw ShapeError(std::string(name) + ": embedding dims differ");
  require_unit_rows(o, name);
  require_unit_rows(t, name);
  const std::int64_t e = o.shape().item();
  const std::size_t bb = static_cast<std::size_t>(batch * batch);
  auto probs = std::make_shared<std::vector<double>>(terms.size() * bb);
  const auto od = o.data();
  const auto td = t.data();
  double total = 0.0;
  std::vector<double> logits(static_cast<std::size_t>(batch));
  for (std::size_t q = 0; q < terms.size(); ++q) {
    const Term& tm = terms[q];
    double term_loss = 0.0;
    for (std::int64_t n = 0; n < batch; ++n) {
      const T* orow = od.data() + (tm.o_offset + n * tm.o_stride) * e;
      for (std::int64_t m = 0; m < batch; ++m) {
        const T* trow = td.data() + (tm.t_offset + m * tm.t_stride) * e;
        double dot = 0.0;
        for (std::int64_t i = 0; i < e; ++i) dot += static_cast<double>(orow[i]) * trow[i];
        logits[static_cast<std::size_t>(m)] = dot / tau;
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double l : logits) z += std::exp(l - mx);
      const double lse = mx + std::log(z);
      term_loss += lse - logits[static_cast<std::size_t>(n)];
      double* p = probs->data() + q * bb + static_cast<std::size_t>(n * batch);
      for (std::int64_t m = 0; m < batch; ++m) p[m] = std::exp(logits[static_cast<std::size_t>(m)] - lse);
    }
    total += term_loss / static_cast<double>(batch);
  }
  return detail::make_result<T>(
      name, Shape{1, 1, 1, 1}, {static_cast<T>(total / normalizer)}, {o.node_ptr(), t.node_ptr()},
      [probs, terms = std::move(terms), batch, e, tau, normalizer, on = o.node(), tn = t.node()](Node<T>& self) {
        const double g = self.grad[0] / (normalizer * static_cast<double>(batch) * tau);
        const std::size_t bb = static_cast<std::size_t>(batch * batch);
        std::vector<double> go(on->data.size(), 0.0), gt(tn->data.size(), 0.0);
        for (std::size_t q = 0; q < terms.size(); ++q) {
          const Term& tm = terms[q];
          for (std::int64_t n = 0; n < batch; ++n) {
            const std::int64_t orow = (tm.o_offset + n * tm.o_stride) * e;
            const double* p = probs->data() + q * bb + static_cast<std::size_t>(n * batch);
            for (std::int64_t m = 0; m < batch; ++m) {
              const double ds = g * (p[m] - (m == n ? 1.0 : 0.0));
              const std::int64_t trow = (tm.t_offset + m * tm.t_stride) * e;
              for (std::int64_t i = 0; i < e; ++i) {
                go[static_cast<std::size_t>(orow + i)] += ds * tn->data[static_cast<std::size_t>(trow + i)];
                gt[static_cast<std::size_t>(trow + i)] += ds * on->data[static_cast<std::size_t>(orow + i)];
              }
            }
          }
        }
        if (on->requires_grad) {
          auto& dst = on->ensure_grad();
          for (std::size_t i = 0; i < go.size(); ++i) dst[i] += static_cast<T>(go[i]);
        }
        if (tn->requires_grad) {
          auto& dst = tn->ensure_grad();
          for (std::size_t i = 0; i < gt.size(); ++i) dst[i] += static_cast<T>(gt[i]);
        }
      });
}

}  // namespace

template <typename T>
BasicTensor<T> infonce(const BasicTensor<T>& o, const BasicTensor<T>& t, double tau) {
  if (o.shape().n != t.shape().n) throw ShapeError("infonce: batch sizes differ");
  return fused_infonce(o, t, o.shape().n, {Term{0, 1, 0, 1}}, 1.0, tau, "infonce");
}

template <typename T>
BasicTensor<T> contrastive_loss(const ContrastiveOutputs<T>& outs) {
  const std::int64_t b = outs.batch, d = outs.views, k = outs.pairs;
  if (d < 2) throw ConfigError("contrastive_loss needs D >= 2");
  if (b < 1 || k < 1) throw ShapeError("contrastive_loss: empty batch");
  if (outs.o.shape().n != b * d * k || outs.t.shape().n != b * d) {
    throw ShapeError("contrastive_loss: O must hold B*D*K rows and T B*D rows");
  }
  std::vector<Term> terms;
  for (std::int64_t i = 0; i < d; ++i)
    for (std::int64_t j = 0; j < d; ++j) {
      if (i == j) continue;
      for (std::int64_t kk = 0; kk < k; ++kk) terms.push_back({i * k + kk, d * k, j, d});
    }
  return fused_infonce(outs.o, outs.t, b, std::move(terms), static_cast<double>(k * d * (d - 1)), outs.tau,
                       "contrastive_loss");
}

#define CDCL_INSTANTIATE_CDIDM(T)                                                         \
  template struct Estimator<T>;                                                           \
  template struct Head<T>;                                                                \
  template struct BranchPair<T>;                                                          \
  template void momentum_update<T>(BranchPair<T>&, double);                               \
  template BasicTensor<T> infonce<T>(const BasicTensor<T>&, const BasicTensor<T>&, double); \
  template BasicTensor<T> contrastive_loss<T>(const ContrastiveOutputs<T>&);

CDCL_INSTANTIATE_CDIDM(float)
CDCL_INSTANTIATE_CDIDM(double)

}  // namespace cdcl::cdidm
