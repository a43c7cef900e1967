#include "cdcl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

namespace cdcl {

using detail::make_result;

namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

template <typename T>
void accumulate(Node<T>& target, const std::vector<T>& delta) {
  auto& g = target.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      std::type_identity_t<const BasicTensor<T>*> bias, std::int64_t stride,
                      Padding pad, std::int64_t groups) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  kernels::ConvGeometry g;
  g.n = xs.n;
  g.cin = xs.c;
  g.h = xs.h;
  g.w = xs.w;
  g.cout = ws.n;
  g.k = ws.h;
  g.stride = stride;
  g.pad = pad.width;
  g.mode = pad.mode;
  g.groups = groups;
  if (ws.h != ws.w) throw ShapeError("conv2d: kernel must be square, got " + ws.str());
  if (groups < 1 || xs.c % groups != 0) {
    throw ShapeError("conv2d: input channels " + std::to_string(xs.c) +
                     " not divisible by groups " + std::to_string(groups));
  }
  if (ws.c != xs.c / groups) {
    throw ShapeError("conv2d: weight " + ws.str() + " does not match input " + xs.str() +
                     " with groups " + std::to_string(groups));
  }
  if (bias && bias->numel() != ws.n) throw ShapeError("conv2d: bias length mismatch");
  g.validate();

  const Shape out_shape{g.n, g.cout, g.out_h(), g.out_w()};
  auto padded = std::make_shared<std::vector<T>>(
      static_cast<std::size_t>(g.n * g.cin * g.padded_h() * g.padded_w()));
  kernels::pad_input(g, x.data().data(), padded->data());
  std::vector<T> out(static_cast<std::size_t>(out_shape.numel()));
  kernels::parallel::conv2d_forward(g, padded->data(), weight.data().data(),
                                    bias ? bias->data().data() : nullptr, out.data());

  std::vector<NodePtr<T>> inputs{x.node_ptr(), weight.node_ptr()};
  Node<T>* bn = nullptr;
  if (bias) {
    inputs.push_back(bias->node_ptr());
    bn = bias->node();
  }
  return make_result<T>(
      "conv2d", out_shape, std::move(out), std::move(inputs),
      [g, padded, xn = x.node(), wn = weight.node(), bn](Node<T>& self) {
        const T* dout = self.grad.data();
        if (xn->requires_grad) {
          std::vector<T> dpad(padded->size(), T(0));
          kernels::parallel::conv2d_backward_input(g, dout, wn->data.data(), dpad.data());
          kernels::fold_padded_grad(g, dpad.data(), xn->ensure_grad().data());
        }
        const bool want_b = bn && bn->requires_grad;
        if (wn->requires_grad || want_b) {
          std::vector<T> dw(wn->data.size());
          std::vector<T> db(want_b ? bn->data.size() : 0);
          kernels::parallel::conv2d_backward_weight(g, padded->data(), dout, dw.data(),
                                                    want_b ? db.data() : nullptr);
          if (wn->requires_grad) accumulate(*wn, dw);
          if (want_b) accumulate(*bn, db);
        }
      });
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                     std::type_identity_t<const BasicTensor<T>*> bias) {
  const std::int64_t n = x.shape().n, in = x.shape().item();
  const std::int64_t out_f = weight.shape().n;
  if (weight.shape().item() != in) {
    throw ShapeError("dense: input features " + std::to_string(in) + " do not match weight " +
                     weight.shape().str());
  }
  if (bias && bias->numel() != out_f) throw ShapeError("dense: bias length mismatch");
  std::vector<T> y(static_cast<std::size_t>(n * out_f));
  kernels::parallel::dense_forward(n, in, out_f, x.data().data(), weight.data().data(),
                                   bias ? bias->data().data() : nullptr, y.data());
  std::vector<NodePtr<T>> inputs{x.node_ptr(), weight.node_ptr()};
  Node<T>* bn = nullptr;
  if (bias) {
    inputs.push_back(bias->node_ptr());
    bn = bias->node();
  }
  return make_result<T>(
      "dense", Shape{n, out_f, 1, 1}, std::move(y), std::move(inputs),
      [n, in, out_f, xn = x.node(), wn = weight.node(), bn](Node<T>& self) {
        T* dx = xn->requires_grad ? xn->ensure_grad().data() : nullptr;
        T* dw = wn->requires_grad ? wn->ensure_grad().data() : nullptr;
        T* db = (bn && bn->requires_grad) ? bn->ensure_grad().data() : nullptr;
        kernels::parallel::dense_backward(n, in, out_f, xn->data.data(), wn->data.data(),
                                          self.grad.data(), dx, dw, db);
      });
}

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& x, Activation kind) {
  const auto& xd = x.data();
  std::vector<T> y(xd.size());
  if (kind == Activation::Gelu) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double v = xd[i];
      y[i] = static_cast<T>(v * normal_cdf(v));
    }
  } else {
    // Kept inside the open interval (0, 1) even where T cannot resolve 1 - s.
    const T lo = std::numeric_limits<T>::min(), hi = std::nextafter(T(1), T(0));
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] = std::clamp(static_cast<T>(logistic(xd[i])), lo, hi);
  }
  return make_result<T>(
      kind == Activation::Gelu ? "gelu" : "sigmoid", x.shape(), std::move(y), {x.node_ptr()},
      [kind, xn = x.node()](Node<T>& self) {
        auto& gx = xn->ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) {
          double d;
          if (kind == Activation::Gelu) {
            const double v = xn->data[i];
            d = normal_cdf(v) + v * normal_pdf(v);
          } else {
            const double s = self.data[i];
            d = s * (1.0 - s);
          }
          gx[i] += static_cast<T>(d * static_cast<double>(self.grad[i]));
        }
      });
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  const Shape s = x.shape();
  if (s.plane() < 1) throw ShapeError("global_avg_pool: empty spatial extent " + s.str());
  std::vector<T> y(static_cast<std::size_t>(s.n * s.c));
  const auto& xd = x.data();
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < s.plane(); ++i) acc += xd[p * s.plane() + i];
    y[p] = static_cast<T>(acc / static_cast<double>(s.plane()));
  }
  return make_result<T>("global_avg_pool", Shape{s.n, s.c, 1, 1}, std::move(y), {x.node_ptr()},
                        [s, xn = x.node()](Node<T>& self) {
                          auto& gx = xn->ensure_grad();
                          const double inv = 1.0 / static_cast<double>(s.plane());
                          for (std::int64_t p = 0; p < s.n * s.c; ++p) {
                            const T d = static_cast<T>(self.grad[p] * inv);
                            for (std::int64_t i = 0; i < s.plane(); ++i) gx[p * s.plane() + i] += d;
                          }
                        });
}

namespace {

// Index of the source element in x (N, C*r*r, H, W) for output (N, C, H*r, W*r).
inline std::int64_t shuffle_source(const Shape& in, std::int64_t r, std::int64_t n, std::int64_t c,
                                   std::int64_t y, std::int64_t x) {
  const std::int64_t ic = c * r * r + (y % r) * r + (x % r);
  return ((n * in.c + ic) * in.h + y / r) * in.w + x / r;
}

}  // namespace

template <typename T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& x, std::int64_t r) {
  const Shape in = x.shape();
  if (r < 1 || in.c % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(in.c) + " not divisible by " +
                     std::to_string(r * r));
  }
  const Shape out{in.n, in.c / (r * r), in.h * r, in.w * r};
  std::vector<std::int64_t> index(static_cast<std::size_t>(out.numel()));
  std::int64_t o = 0;
  for (std::int64_t n = 0; n < out.n; ++n)
    for (std::int64_t c = 0; c < out.c; ++c)
      for (std::int64_t y = 0; y < out.h; ++y)
        for (std::int64_t xx = 0; xx < out.w; ++xx) index[o++] = shuffle_source(in, r, n, c, y, xx);
  const auto& xd = x.data();
  std::vector<T> yv(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) yv[i] = xd[index[i]];
  auto shared_index = std::make_shared<std::vector<std::int64_t>>(std::move(index));
  return make_result<T>("pixel_shuffle", out, std::move(yv), {x.node_ptr()},
                        [shared_index, xn = x.node()](Node<T>& self) {
                          auto& gx = xn->ensure_grad();
                          const auto& idx = *shared_index;
                          for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += self.grad[i];
                        });
}

template <typename T>
BasicTensor<T> pixel_unshuffle(const BasicTensor<T>& x, std::int64_t r) {
  const Shape in = x.shape();
  if (r < 1 || in.h % r != 0 || in.w % r != 0) {
    throw ShapeError("pixel_unshuffle: spatial dims of " + in.str() + " not divisible by " +
                     std::to_string(r));
  }
  const Shape out{in.n, in.c * r * r, in.h / r, in.w / r};
  // Inverse permutation of pixel_shuffle: out element at shuffle_source(out, ...) comes from in.
  std::vector<std::int64_t> index(static_cast<std::size_t>(in.numel()));
  std::int64_t o = 0;
  for (std::int64_t n = 0; n < in.n; ++n)
    for (std::int64_t c = 0; c < in.c; ++c)
      for (std::int64_t y = 0; y < in.h; ++y)
        for (std::int64_t xx = 0; xx < in.w; ++xx) index[shuffle_source(out, r, n, c, y, xx)] = o++;
  const auto& xd = x.data();
  std::vector<T> yv(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) yv[i] = xd[index[i]];
  auto shared_index = std::make_shared<std::vector<std::int64_t>>(std::move(index));
  return make_result<T>("pixel_unshuffle", out, std::move(yv), {x.node_ptr()},
                        [shared_index, xn = x.node()](Node<T>& self) {
                          auto& gx = xn->ensure_grad();
                          const auto& idx = *shared_index;
                          for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += self.grad[i];
                        });
}

template <typename T>
BasicTensor<T> batch_norm1d(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                            const BasicTensor<T>& beta, BatchNormState<T>& state, NormMode mode) {
  const Shape s = x.shape();
  const std::int64_t n = s.n, f = s.item();
  if (s.h != 1 || s.w != 1) throw ShapeError("batch_norm1d: expected (N,F,1,1), got " + s.str());
  if (gamma.numel() != f || beta.numel() != f || state.running_mean.numel() != f ||
      state.running_var.numel() != f) {
    throw ShapeError("batch_norm1d: parameter length does not match features " + std::to_string(f));
  }
  if (mode == NormMode::Train && n < 2) {
    throw ShapeError("batch_norm1d: train mode needs at least 2 samples, got " + std::to_string(n));
  }
  const auto& xd = x.data();
  auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n * f));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(f));
  std::vector<T> y(static_cast<std::size_t>(n * f));
  auto rm = state.running_mean.mutable_data();
  auto rv = state.running_var.mutable_data();
  for (std::int64_t j = 0; j < f; ++j) {
    double mu, var;
    if (mode == NormMode::Train) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) acc += xd[i * f + j];
      mu = acc / static_cast<double>(n);
      double sq = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double d = xd[i * f + j] - mu;
        sq += d * d;
      }
      var = sq / static_cast<double>(n);
      const double unbiased = sq / static_cast<double>(n - 1);
      rm[j] = static_cast<T>((1.0 - state.momentum) * rm[j] + state.momentum * mu);
      rv[j] = static_cast<T>((1.0 - state.momentum) * rv[j] + state.momentum * unbiased);
    } else {
      mu = rm[j];
      var = rv[j];
    }
    const double is = 1.0 / std::sqrt(var + state.eps);
    (*inv_std)[j] = is;
    for (std::int64_t i = 0; i < n; ++i) {
      const double h = (xd[i * f + j] - mu) * is;
      (*xhat)[i * f + j] = h;
      y[i * f + j] = static_cast<T>(gamma.data()[j] * h + beta.data()[j]);
    }
  }
  return make_result<T>(
      "batch_norm1d", s, std::move(y), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [n, f, mode, xhat, inv_std, xn = x.node(), gn = gamma.node(), bn = beta.node()](Node<T>& self) {
        const auto& dy = self.grad;
        for (std::int64_t j = 0; j < f; ++j) {
          double sum_dy = 0.0, sum_dy_h = 0.0;
          for (std::int64_t i = 0; i < n; ++i) {
            sum_dy += dy[i * f + j];
            sum_dy_h += dy[i * f + j] * (*xhat)[i * f + j];
          }
          if (gn->requires_grad) gn->ensure_grad()[j] += static_cast<T>(sum_dy_h);
          if (bn->requires_grad) bn->ensure_grad()[j] += static_cast<T>(sum_dy);
          if (!xn->requires_grad) continue;
          auto& gx = xn->ensure_grad();
          const double gs = gn->data[j] * (*inv_std)[j];
          for (std::int64_t i = 0; i < n; ++i) {
            double d;
            if (mode == NormMode::Train) {
              d = gs * (dy[i * f + j] - sum_dy / n - (*xhat)[i * f + j] * sum_dy_h / n);
            } else {
              d = gs * dy[i * f + j];
            }
            gx[i * f + j] += static_cast<T>(d);
          }
        }
      });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> y(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.data()[i];
  return make_result<T>("add", a.shape(), std::move(y), {a.node_ptr(), b.node_ptr()},
                        [an = a.node(), bn = b.node()](Node<T>& self) {
                          if (an->requires_grad) accumulate(*an, self.grad);
                          if (bn->requires_grad) accumulate(*bn, self.grad);
                        });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> y(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.data()[i];
  return make_result<T>("sub", a.shape(), std::move(y), {a.node_ptr(), b.node_ptr()},
                        [an = a.node(), bn = b.node()](Node<T>& self) {
                          if (an->requires_grad) accumulate(*an, self.grad);
                          if (bn->requires_grad) {
                            auto& g = bn->ensure_grad();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
                          }
                        });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> y(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.data()[i];
  return make_result<T>("mul", a.shape(), std::move(y), {a.node_ptr(), b.node_ptr()},
                        [an = a.node(), bn = b.node()](Node<T>& self) {
                          if (an->requires_grad) {
                            auto& g = an->ensure_grad();
                            for (std::size_t i = 0; i < g.size(); ++i)
                              g[i] += self.grad[i] * bn->data[i];
                          }
                          if (bn->requires_grad) {
                            auto& g = bn->ensure_grad();
                            for (std::size_t i = 0; i < g.size(); ++i)
                              g[i] += self.grad[i] * an->data[i];
                          }
                        });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, double factor) {
  std::vector<T> y(x.data().begin(), x.data().end());
  const T f = static_cast<T>(factor);
  for (auto& v : y) v *= f;
  return make_result<T>("scale", x.shape(), std::move(y), {x.node_ptr()},
                        [f, xn = x.node()](Node<T>& self) {
                          auto& g = xn->ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += f * self.grad[i];
                        });
}

template <typename T>
BasicTensor<T> mul_channel(const BasicTensor<T>& x, const BasicTensor<T>& gate) {
  const Shape s = x.shape();
  if (gate.shape() != Shape{s.n, s.c, 1, 1}) {
    throw ShapeError("mul_channel: gate " + gate.shape().str() + " does not broadcast over " +
                     s.str());
  }
  std::vector<T> y(x.data().begin(), x.data().end());
  const std::int64_t plane = s.plane();
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const T gv = gate.data()[p];
    for (std::int64_t i = 0; i < plane; ++i) y[p * plane + i] *= gv;
  }
  return make_result<T>(
      "mul_channel", s, std::move(y), {x.node_ptr(), gate.node_ptr()},
      [s, xn = x.node(), gn = gate.node()](Node<T>& self) {
        const std::int64_t plane = s.plane();
        for (std::int64_t p = 0; p < s.n * s.c; ++p) {
          if (xn->requires_grad) {
            auto& gx = xn->ensure_grad();
            const T gv = gn->data[p];
            for (std::int64_t i = 0; i < plane; ++i) gx[p * plane + i] += self.grad[p * plane + i] * gv;
          }
          if (gn->requires_grad) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < plane; ++i)
              acc += static_cast<double>(self.grad[p * plane + i]) * xn->data[p * plane + i];
            gn->ensure_grad()[p] += static_cast<T>(acc);
          }
        }
      });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape.numel() != x.numel()) {
    throw ShapeError("reshape: " + x.shape().str() + " -> " + shape.str() + " changes element count");
  }
  std::vector<T> y(x.data().begin(), x.data().end());
  return make_result<T>("reshape", shape, std::move(y), {x.node_ptr()},
                        [xn = x.node()](Node<T>& self) { accumulate(*xn, self.grad); });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double acc = 0.0;
  for (const T v : x.data()) acc += v;
  return make_result<T>("sum", Shape{1, 1, 1, 1}, {static_cast<T>(acc)}, {x.node_ptr()},
                        [xn = x.node()](Node<T>& self) {
                          auto& g = xn->ensure_grad();
                          for (auto& v : g) v += self.grad[0];
                        });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

template <typename T>
BasicTensor<T> l2_normalize(const BasicTensor<T>& x, double eps) {
  const Shape s = x.shape();
  const std::int64_t f = s.item();
  auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(s.n));
  std::vector<T> y(x.data().begin(), x.data().end());
  for (std::int64_t i = 0; i < s.n; ++i) {
    double sq = 0.0;
    for (std::int64_t j = 0; j < f; ++j) sq += static_cast<double>(y[i * f + j]) * y[i * f + j];
    const double norm = std::max(std::sqrt(sq), eps);
    (*norms)[i] = norm;
    for (std::int64_t j = 0; j < f; ++j) y[i * f + j] = static_cast<T>(y[i * f + j] / norm);
  }
  return make_result<T>("l2_normalize", s, std::move(y), {x.node_ptr()},
                        [f, norms, xn = x.node()](Node<T>& self) {
                          auto& g = xn->ensure_grad();
                          const std::int64_t n = static_cast<std::int64_t>(norms->size());
                          for (std::int64_t i = 0; i < n; ++i) {
                            const double norm = (*norms)[i];
                            double dot = 0.0;
                            for (std::int64_t j = 0; j < f; ++j)
                              dot += static_cast<double>(self.grad[i * f + j]) * xn->data[i * f + j];
                            for (std::int64_t j = 0; j < f; ++j) {
                              const double yv = xn->data[i * f + j] / norm;
                              g[i * f + j] += static_cast<T>(
                                  (self.grad[i * f + j] - yv * dot / norm) / norm);
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> pair_mean(const BasicTensor<T>& x, std::int64_t group,
                         const std::vector<std::pair<std::int64_t, std::int64_t>>& pairs) {
  const Shape s = x.shape();
  if (group < 1 || s.n % group != 0) {
    throw ShapeError("pair_mean: batch " + std::to_string(s.n) + " not a multiple of group " +
                     std::to_string(group));
  }
  for (const auto& [a, b] : pairs) {
    if (a < 0 || b < 0 || a >= group || b >= group) throw ShapeError("pair_mean: pair index out of range");
  }
  const std::int64_t groups = s.n / group, np = static_cast<std::int64_t>(pairs.size());
  const std::int64_t f = s.item();
  const Shape out{groups * np, s.c, s.h, s.w};
  std::vector<T> y(static_cast<std::size_t>(out.numel()));
  const auto& xd = x.data();
  for (std::int64_t gi = 0; gi < groups; ++gi)
    for (std::int64_t p = 0; p < np; ++p) {
      const T* a = xd.data() + (gi * group + pairs[p].first) * f;
      const T* b = xd.data() + (gi * group + pairs[p].second) * f;
      T* dst = y.data() + (gi * np + p) * f;
      for (std::int64_t j = 0; j < f; ++j) dst[j] = (a[j] + b[j]) / T(2);
    }
  return make_result<T>("pair_mean", out, std::move(y), {x.node_ptr()},
                        [groups, group, np, f, pairs, xn = x.node()](Node<T>& self) {
                          auto& g = xn->ensure_grad();
                          for (std::int64_t gi = 0; gi < groups; ++gi)
                            for (std::int64_t p = 0; p < np; ++p) {
                              const T* d = self.grad.data() + (gi * np + p) * f;
                              T* a = g.data() + (gi * group + pairs[p].first) * f;
                              T* b = g.data() + (gi * group + pairs[p].second) * f;
                              for (std::int64_t j = 0; j < f; ++j) {
                                a[j] += d[j] / T(2);
                                b[j] += d[j] / T(2);
                              }
                            }
                        });
}

template <typename T>
BasicTensor<T> l1_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  require_same_shape(pred, target, "l1_loss");
  const auto& p = pred.data();
  const auto& t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(static_cast<double>(p[i]) - t[i]);
  const double inv = 1.0 / static_cast<double>(p.size());
  return make_result<T>(
      "l1_loss", Shape{1, 1, 1, 1}, {static_cast<T>(acc * inv)}, {pred.node_ptr(), target.node_ptr()},
      [inv, pn = pred.node(), tn = target.node()](Node<T>& self) {
        const double g0 = self.grad[0] * inv;
        for (std::size_t i = 0; i < pn->data.size(); ++i) {
          const double diff = static_cast<double>(pn->data[i]) - tn->data[i];
          const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
          if (pn->requires_grad) pn->ensure_grad()[i] += static_cast<T>(sgn * g0);
          if (tn->requires_grad) tn->ensure_grad()[i] -= static_cast<T>(sgn * g0);
        }
      });
}

#define CDCL_INSTANTIATE_OPS(T)                                                                   \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                 const BasicTensor<T>*, std::int64_t, Padding, std::int64_t);      \
  template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                const BasicTensor<T>*);                                           \
  template BasicTensor<T> activation(const BasicTensor<T>&, Activation);                          \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                 \
  template BasicTensor<T> pixel_shuffle(const BasicTensor<T>&, std::int64_t);                     \
  template BasicTensor<T> pixel_unshuffle(const BasicTensor<T>&, std::int64_t);                   \
  template BasicTensor<T> batch_norm1d(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                       const BasicTensor<T>&, BatchNormState<T>&, NormMode);      \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> scale(const BasicTensor<T>&, double);                                   \
  template BasicTensor<T> mul_channel(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                  \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                             \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                            \
  template BasicTensor<T> l2_normalize(const BasicTensor<T>&, double);                            \
  template BasicTensor<T> pair_mean(const BasicTensor<T>&, std::int64_t,                          \
                                    const std::vector<std::pair<std::int64_t, std::int64_t>>&);   \
  template BasicTensor<T> l1_loss(const BasicTensor<T>&, const BasicTensor<T>&);

CDCL_INSTANTIATE_OPS(float)
CDCL_INSTANTIATE_OPS(double)

}  // namespace cdcl
