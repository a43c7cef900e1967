#include "cdcl/kernels.hpp"

#include <algorithm>
#include <vector>

#include "cdcl/error.hpp"

namespace cdcl::kernels {

namespace {

// Upper bound on im2col buffer elements per chunk of batch items.
constexpr std::int64_t kColumnBudget = std::int64_t{1} << 22;
// Column block width for the GEMM so one block of the column matrix stays cached.
constexpr std::int64_t kColumnBlock = 256;

std::int64_t items_per_chunk(const ConvGeometry& g) {
  const std::int64_t per_item = g.cin_per_group() * g.k * g.k * g.out_h() * g.out_w();
  return std::clamp<std::int64_t>(kColumnBudget / std::max<std::int64_t>(per_item, 1), 1, g.n);
}

template <typename T>
void im2col(const ConvGeometry& g, const T* padded, std::int64_t group, std::int64_t n0,
            std::int64_t count, T* col) {
  const std::int64_t oh_n = g.out_h(), ow_n = g.out_w(), hp = g.padded_h(), wp = g.padded_w();
  const std::int64_t kk = g.k * g.k, rows = g.cin_per_group() * kk, cols = count * oh_n * ow_n;
  const std::int64_t s = g.stride;
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t icg = r / kk, kh = (r / g.k) % g.k, kw = r % g.k;
    const std::int64_t ic = group * g.cin_per_group() + icg;
    T* dst = col + r * cols;
    for (std::int64_t i = 0; i < count; ++i) {
      const T* plane = padded + ((n0 + i) * g.cin + ic) * hp * wp;
      for (std::int64_t oh = 0; oh < oh_n; ++oh) {
        const T* src = plane + (oh * s + kh) * wp + kw;
        T* out = dst + (i * oh_n + oh) * ow_n;
        if (s == 1) {
          std::copy(src, src + ow_n, out);
        } else {
          for (std::int64_t ow = 0; ow < ow_n; ++ow) out[ow] = src[ow * s];
        }
      }
    }
  }
}

// Gathers dout[n0..n0+count)[group channels] into a (cout_g, count*OH*OW) matrix.
template <typename T>
void gather_dout(const ConvGeometry& g, const T* dout, std::int64_t group, std::int64_t n0,
                 std::int64_t count, T* dst) {
  const std::int64_t ohw = g.out_h() * g.out_w(), cols = count * ohw, cog = g.cout_per_group();
#pragma omp parallel for schedule(static)
  for (std::int64_t ocg = 0; ocg < cog; ++ocg) {
    const std::int64_t oc = group * cog + ocg;
    for (std::int64_t i = 0; i < count; ++i) {
      const T* src = dout + ((n0 + i) * g.cout + oc) * ohw;
      std::copy(src, src + ohw, dst + ocg * cols + i * ohw);
    }
  }
}

}  // namespace

void ConvGeometry::validate() const {
  if (n < 1 || cin < 1 || h < 1 || w < 1 || cout < 1 || k < 1 || stride < 1 || pad < 0 ||
      groups < 1) {
    throw ShapeError("conv2d: non-positive extent in geometry");
  }
  if (cin % groups != 0 || cout % groups != 0) {
    throw ShapeError("conv2d: channels " + std::to_string(cin) + "->" + std::to_string(cout) +
                     " not divisible by groups " + std::to_string(groups));
  }
  if (mode == PadMode::Reflect && (pad >= h || pad >= w)) {
    throw ShapeError("conv2d: reflect pad " + std::to_string(pad) + " too wide for input " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  if (h + 2 * pad < k || w + 2 * pad < k) throw ShapeError("conv2d: kernel larger than padded input");
}

template <typename T>
void pad_input(const ConvGeometry& g, const T* x, T* padded) {
  const std::int64_t hp = g.padded_h(), wp = g.padded_w(), planes = g.n * g.cin;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = x + p * g.h * g.w;
    T* dst = padded + p * hp * wp;
    for (std::int64_t y = 0; y < hp; ++y) {
      const std::int64_t sy = source_index(y - g.pad, g.h, g.mode);
      for (std::int64_t xx = 0; xx < wp; ++xx) {
        const std::int64_t sx = source_index(xx - g.pad, g.w, g.mode);
        dst[y * wp + xx] = (sy < 0 || sx < 0) ? T(0) : src[sy * g.w + sx];
      }
    }
  }
}

template <typename T>
void fold_padded_grad(const ConvGeometry& g, const T* padded_grad, T* grad) {
  const std::int64_t hp = g.padded_h(), wp = g.padded_w(), planes = g.n * g.cin;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = padded_grad + p * hp * wp;
    T* dst = grad + p * g.h * g.w;
    for (std::int64_t y = 0; y < hp; ++y) {
      const std::int64_t sy = source_index(y - g.pad, g.h, g.mode);
      if (sy < 0) continue;
      for (std::int64_t xx = 0; xx < wp; ++xx) {
        const std::int64_t sx = source_index(xx - g.pad, g.w, g.mode);
        if (sx < 0) continue;
        dst[sy * g.w + sx] += src[y * wp + xx];
      }
    }
  }
}

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* padded, const T* weight, const T* bias, T* out) {
  const std::int64_t oh_n = g.out_h(), ow_n = g.out_w(), hp = g.padded_h(), wp = g.padded_w();
  const std::int64_t cig = g.cin_per_group(), cog = g.cout_per_group();
  for (std::int64_t n = 0; n < g.n; ++n)
    for (std::int64_t oc = 0; oc < g.cout; ++oc)
      for (std::int64_t oh = 0; oh < oh_n; ++oh)
        for (std::int64_t ow = 0; ow < ow_n; ++ow) {
          T acc = bias ? bias[oc] : T(0);
          for (std::int64_t icg = 0; icg < cig; ++icg) {
            const std::int64_t ic = (oc / cog) * cig + icg;
            for (std::int64_t kh = 0; kh < g.k; ++kh)
              for (std::int64_t kw = 0; kw < g.k; ++kw) {
                const T wv = weight[((oc * cig + icg) * g.k + kh) * g.k + kw];
                const T xv =
                    padded[((n * g.cin + ic) * hp + oh * g.stride + kh) * wp + ow * g.stride + kw];
                acc += wv * xv;
              }
          }
          out[((n * g.cout + oc) * oh_n + oh) * ow_n + ow] = acc;
        }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dout, const T* weight, T* padded_grad) {
  const std::int64_t oh_n = g.out_h(), ow_n = g.out_w(), hp = g.padded_h(), wp = g.padded_w();
  const std::int64_t cig = g.cin_per_group(), cog = g.cout_per_group();
  for (std::int64_t n = 0; n < g.n; ++n)
    for (std::int64_t ic = 0; ic < g.cin; ++ic) {
      const std::int64_t group = ic / cig, icg = ic % cig;
      for (std::int64_t kh = 0; kh < g.k; ++kh)
        for (std::int64_t kw = 0; kw < g.k; ++kw)
          for (std::int64_t oh = 0; oh < oh_n; ++oh)
            for (std::int64_t ow = 0; ow < ow_n; ++ow) {
              T val = T(0);
              for (std::int64_t ocg = 0; ocg < cog; ++ocg) {
                const std::int64_t oc = group * cog + ocg;
                val += weight[((oc * cig + icg) * g.k + kh) * g.k + kw] *
                       dout[((n * g.cout + oc) * oh_n + oh) * ow_n + ow];
              }
              padded_grad[((n * g.cin + ic) * hp + oh * g.stride + kh) * wp + ow * g.stride + kw] +=
                  val;
            }
    }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* padded, const T* dout, T* dweight,
                            T* dbias) {
  const std::int64_t oh_n = g.out_h(), ow_n = g.out_w(), hp = g.padded_h(), wp = g.padded_w();
  const std::int64_t cig = g.cin_per_group(), cog = g.cout_per_group();
  for (std::int64_t oc = 0; oc < g.cout; ++oc) {
    for (std::int64_t icg = 0; icg < cig; ++icg) {
      const std::int64_t ic = (oc / cog) * cig + icg;
      for (std::int64_t kh = 0; kh < g.k; ++kh)
        for (std::int64_t kw = 0; kw < g.k; ++kw) {
          double acc = 0.0;
          for (std::int64_t n = 0; n < g.n; ++n)
            for (std::int64_t oh = 0; oh < oh_n; ++oh)
              for (std::int64_t ow = 0; ow < ow_n; ++ow) {
                acc += static_cast<double>(dout[((n * g.cout + oc) * oh_n + oh) * ow_n + ow]) *
                       static_cast<double>(
                           padded[((n * g.cin + ic) * hp + oh * g.stride + kh) * wp +
                                  ow * g.stride + kw]);
              }
          dweight[((oc * cig + icg) * g.k + kh) * g.k + kw] = static_cast<T>(acc);
        }
    }
    if (dbias) {
      double acc = 0.0;
      for (std::int64_t n = 0; n < g.n; ++n)
        for (std::int64_t p = 0; p < oh_n * ow_n; ++p)
          acc += static_cast<double>(dout[(n * g.cout + oc) * oh_n * ow_n + p]);
      dbias[oc] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void dense_forward(std::int64_t n, std::int64_t in, std::int64_t out, const T* x, const T* weight,
                   const T* bias, T* y) {
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t o = 0; o < out; ++o) {
      T acc = bias ? bias[o] : T(0);
      for (std::int64_t f = 0; f < in; ++f) acc += x[i * in + f] * weight[o * in + f];
      y[i * out + o] = acc;
    }
}

void filter_plane(std::int64_t h, std::int64_t w, const float* src, std::int64_t ksize,
                  const double* kernel, float* dst) {
  const std::int64_t r = ksize / 2;
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < ksize; ++i) {
        const std::int64_t sy = source_index(y + r - i, h, PadMode::Reflect);
        for (std::int64_t j = 0; j < ksize; ++j) {
          const std::int64_t sx = source_index(x + r - j, w, PadMode::Reflect);
          acc += kernel[i * ksize + j] * src[sy * w + sx];
        }
      }
      dst[y * w + x] = static_cast<float>(acc);
    }
}

}  // namespace reference

namespace parallel {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* padded, const T* weight, const T* bias, T* out) {
  const std::int64_t ohw = g.out_h() * g.out_w(), rows = g.cin_per_group() * g.k * g.k;
  const std::int64_t cog = g.cout_per_group(), chunk = items_per_chunk(g);
  std::vector<T> col, tmp;
  for (std::int64_t group = 0; group < g.groups; ++group) {
    for (std::int64_t n0 = 0; n0 < g.n; n0 += chunk) {
      const std::int64_t count = std::min(chunk, g.n - n0), cols = count * ohw;
      col.resize(static_cast<std::size_t>(rows * cols));
      tmp.resize(static_cast<std::size_t>(cog * cols));
      im2col(g, padded, group, n0, count, col.data());
      const std::int64_t blocks = (cols + kColumnBlock - 1) / kColumnBlock;
#pragma omp parallel for schedule(static)
      for (std::int64_t blk = 0; blk < blocks; ++blk) {
        const std::int64_t p0 = blk * kColumnBlock, p1 = std::min(cols, p0 + kColumnBlock);
        for (std::int64_t ocg = 0; ocg < cog; ++ocg) {
          const std::int64_t oc = group * cog + ocg;
          T* acc = tmp.data() + ocg * cols;
          const T b = bias ? bias[oc] : T(0);
          for (std::int64_t p = p0; p < p1; ++p) acc[p] = b;
          const T* wrow = weight + oc * rows;
          for (std::int64_t r = 0; r < rows; ++r) {
            const T wv = wrow[r];
            const T* c = col.data() + r * cols;
            for (std::int64_t p = p0; p < p1; ++p) acc[p] += wv * c[p];
          }
        }
      }
#pragma omp parallel for schedule(static)
      for (std::int64_t ocg = 0; ocg < cog; ++ocg) {
        const std::int64_t oc = group * cog + ocg;
        for (std::int64_t i = 0; i < count; ++i) {
          const T* src = tmp.data() + ocg * cols + i * ohw;
          std::copy(src, src + ohw, out + ((n0 + i) * g.cout + oc) * ohw);
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dout, const T* weight, T* padded_grad) {
  const std::int64_t oh_n = g.out_h(), ow_n = g.out_w(), ohw = oh_n * ow_n;
  const std::int64_t hp = g.padded_h(), wp = g.padded_w(), kk = g.k * g.k;
  const std::int64_t cig = g.cin_per_group(), cog = g.cout_per_group(), rows = cig * kk;
  const std::int64_t chunk = items_per_chunk(g), s = g.stride;
  std::vector<T> dcol, dy;
  for (std::int64_t group = 0; group < g.groups; ++group) {
    for (std::int64_t n0 = 0; n0 < g.n; n0 += chunk) {
      const std::int64_t count = std::min(chunk, g.n - n0), cols = count * ohw;
      dy.resize(static_cast<std::size_t>(cog * cols));
      dcol.assign(static_cast<std::size_t>(rows * cols), T(0));
      gather_dout(g, dout, group, n0, count, dy.data());
#pragma omp parallel for schedule(static)
      for (std::int64_t r = 0; r < rows; ++r) {
        T* acc = dcol.data() + r * cols;
        for (std::int64_t ocg = 0; ocg < cog; ++ocg) {
          const T wv = weight[(group * cog + ocg) * rows + r];
          const T* d = dy.data() + ocg * cols;
          for (std::int64_t p = 0; p < cols; ++p) acc[p] += wv * d[p];
        }
      }
#pragma omp parallel for collapse(2) schedule(static)
      for (std::int64_t i = 0; i < count; ++i) {
        for (std::int64_t icg = 0; icg < cig; ++icg) {
          const std::int64_t ic = group * cig + icg;
          T* plane = padded_grad + ((n0 + i) * g.cin + ic) * hp * wp;
          for (std::int64_t kh = 0; kh < g.k; ++kh)
            for (std::int64_t kw = 0; kw < g.k; ++kw) {
              const T* src = dcol.data() + (icg * kk + kh * g.k + kw) * cols + i * ohw;
              for (std::int64_t oh = 0; oh < oh_n; ++oh) {
                T* dst = plane + (oh * s + kh) * wp + kw;
                const T* row = src + oh * ow_n;
                for (std::int64_t ow = 0; ow < ow_n; ++ow) dst[ow * s] += row[ow];
              }
            }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* padded, const T* dout, T* dweight,
                            T* dbias) {
  const std::int64_t ohw = g.out_h() * g.out_w(), rows = g.cin_per_group() * g.k * g.k;
  const std::int64_t cog = g.cout_per_group(), chunk = items_per_chunk(g);
  std::vector<double> wacc(static_cast<std::size_t>(g.cout * rows), 0.0);
  std::vector<double> bacc(static_cast<std::size_t>(g.cout), 0.0);
  std::vector<T> col, dy;
  std::vector<double> colt;
  for (std::int64_t group = 0; group < g.groups; ++group) {
    for (std::int64_t n0 = 0; n0 < g.n; n0 += chunk) {
      const std::int64_t count = std::min(chunk, g.n - n0), cols = count * ohw;
      col.resize(static_cast<std::size_t>(rows * cols));
      dy.resize(static_cast<std::size_t>(cog * cols));
      im2col(g, padded, group, n0, count, col.data());
      gather_dout(g, dout, group, n0, count, dy.data());
      colt.resize(col.size());
#pragma omp parallel for schedule(static)
      for (std::int64_t p = 0; p < cols; ++p)
        for (std::int64_t r = 0; r < rows; ++r) colt[p * rows + r] = static_cast<double>(col[r * cols + p]);
#pragma omp parallel for schedule(static)
      for (std::int64_t ocg = 0; ocg < cog; ++ocg) {
        const std::int64_t oc = group * cog + ocg;
        const T* d = dy.data() + ocg * cols;
        double* acc = wacc.data() + oc * rows;
        for (std::int64_t p = 0; p < cols; ++p) {
          const double dp = static_cast<double>(d[p]);
          const double* c = colt.data() + p * rows;
          for (std::int64_t r = 0; r < rows; ++r) acc[r] += dp * c[r];
        }
        double b = bacc[oc];
        for (std::int64_t p = 0; p < cols; ++p) b += static_cast<double>(d[p]);
        bacc[oc] = b;
      }
    }
  }
  for (std::size_t i = 0; i < wacc.size(); ++i) dweight[i] = static_cast<T>(wacc[i]);
  if (dbias) {
    for (std::size_t i = 0; i < bacc.size(); ++i) dbias[i] = static_cast<T>(bacc[i]);
  }
}

template <typename T>
void dense_forward(std::int64_t n, std::int64_t in, std::int64_t out, const T* x, const T* weight,
                   const T* bias, T* y) {
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t o = 0; o < out; ++o) {
      T acc = bias ? bias[o] : T(0);
      const T* xr = x + i * in;
      const T* wr = weight + o * in;
      for (std::int64_t f = 0; f < in; ++f) acc += xr[f] * wr[f];
      y[i * out + o] = acc;
    }
}

template <typename T>
void dense_backward(std::int64_t n, std::int64_t in, std::int64_t out, const T* x, const T* weight,
                    const T* dy, T* dx, T* dweight, T* dbias) {
  if (dx) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      std::vector<double> acc(static_cast<std::size_t>(in), 0.0);
      for (std::int64_t o = 0; o < out; ++o) {
        const double d = dy[i * out + o];
        const T* wr = weight + o * in;
        for (std::int64_t f = 0; f < in; ++f) acc[f] += d * static_cast<double>(wr[f]);
      }
      for (std::int64_t f = 0; f < in; ++f) dx[i * in + f] += static_cast<T>(acc[f]);
    }
  }
  if (dweight || dbias) {
#pragma omp parallel for schedule(static)
    for (std::int64_t o = 0; o < out; ++o) {
      std::vector<double> acc(static_cast<std::size_t>(in), 0.0);
      double b = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double d = dy[i * out + o];
        b += d;
        const T* xr = x + i * in;
        for (std::int64_t f = 0; f < in; ++f) acc[f] += d * static_cast<double>(xr[f]);
      }
      if (dweight) {
        for (std::int64_t f = 0; f < in; ++f) dweight[o * in + f] += static_cast<T>(acc[f]);
      }
      if (dbias) dbias[o] += static_cast<T>(b);
    }
  }
}

void filter_plane(std::int64_t h, std::int64_t w, const float* src, std::int64_t ksize,
                  const double* kernel, float* dst) {
  const std::int64_t r = ksize / 2, hp = h + 2 * r, wp = w + 2 * r;
  std::vector<double> padded(static_cast<std::size_t>(hp * wp));
  for (std::int64_t y = 0; y < hp; ++y) {
    const std::int64_t sy = source_index(y - r, h, PadMode::Reflect);
    for (std::int64_t x = 0; x < wp; ++x)
      padded[y * wp + x] = src[sy * w + source_index(x - r, w, PadMode::Reflect)];
  }
  // Convolution: output (y, x) pairs kernel tap (i, j) with padded (y + 2r - i, x + 2r - j).
#pragma omp parallel for schedule(static)
  for (std::int64_t y = 0; y < h; ++y) {
    std::vector<double> acc(static_cast<std::size_t>(w), 0.0);
    for (std::int64_t i = 0; i < ksize; ++i) {
      const double* row = padded.data() + (y + 2 * r - i) * wp + 2 * r;
      for (std::int64_t j = 0; j < ksize; ++j) {
        const double kv = kernel[i * ksize + j];
        const double* s = row - j;
        for (std::int64_t x = 0; x < w; ++x) acc[x] += kv * s[x];
      }
    }
    for (std::int64_t x = 0; x < w; ++x) dst[y * w + x] = static_cast<float>(acc[x]);
  }
}

void filter_plane_separable(std::int64_t h, std::int64_t w, const float* src,
                            std::span<const double> taps, float* dst) {
  const std::int64_t ksize = static_cast<std::int64_t>(taps.size()), r = ksize / 2;
  const std::int64_t wp = w + 2 * r;
  // Horizontal pass over every source row, then vertical pass with reflected rows.
  std::vector<double> horiz(static_cast<std::size_t>(h * w));
#pragma omp parallel for schedule(static)
  for (std::int64_t y = 0; y < h; ++y) {
    std::vector<double> row(static_cast<std::size_t>(wp));
    for (std::int64_t x = 0; x < wp; ++x)
      row[x] = src[y * w + source_index(x - r, w, PadMode::Reflect)];
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < ksize; ++j) acc += taps[j] * row[x + 2 * r - j];
      horiz[y * w + x] = acc;
    }
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t y = 0; y < h; ++y) {
    std::vector<double> acc(static_cast<std::size_t>(w), 0.0);
    for (std::int64_t i = 0; i < ksize; ++i) {
      const double* row = horiz.data() + source_index(y + r - i, h, PadMode::Reflect) * w;
      const double kv = taps[i];
      for (std::int64_t x = 0; x < w; ++x) acc[x] += kv * row[x];
    }
    for (std::int64_t x = 0; x < w; ++x) dst[y * w + x] = static_cast<float>(acc[x]);
  }
}

}  // namespace parallel

#define CDCL_INSTANTIATE_KERNELS(T)                                                              \
  template void pad_input<T>(const ConvGeometry&, const T*, T*);                                 \
  template void fold_padded_grad<T>(const ConvGeometry&, const T*, T*);                          \
  template void reference::conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*,  \
                                             T*);                                                \
  template void reference::conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*); \
  template void reference::conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, \
                                                     T*);                                        \
  template void reference::dense_forward<T>(std::int64_t, std::int64_t, std::int64_t, const T*,  \
                                            const T*, const T*, T*);                             \
  template void parallel::conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*,   \
                                            T*);                                                 \
  template void parallel::conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);  \
  template void parallel::conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*,  \
                                                    T*);                                         \
  template void parallel::dense_forward<T>(std::int64_t, std::int64_t, std::int64_t, const T*,   \
                                           const T*, const T*, T*);                              \
  template void parallel::dense_backward<T>(std::int64_t, std::int64_t, std::int64_t, const T*,  \
                                            const T*, const T*, T*, T*, T*);

CDCL_INSTANTIATE_KERNELS(float)
CDCL_INSTANTIATE_KERNELS(double)

}  // namespace cdcl::kernels
