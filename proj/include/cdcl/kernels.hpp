#pragma once

// Raw compute kernels behind the differentiable ops.
//
// Every kernel exists twice: `reference::` is a direct loop nest kept for
// testing and benchmarking, `parallel::` is the im2col/OpenMP version used by
// the ops. Both accumulate each output element in the same order, so results
// are bit-identical for any thread count.

#include <cstdint>
#include <span>

namespace cdcl::kernels {

enum class PadMode { Zero, Reflect };

struct ConvGeometry {
  std::int64_t n = 1, cin = 1, h = 1, w = 1;
  std::int64_t cout = 1, k = 1, stride = 1, pad = 0, groups = 1;
  PadMode mode = PadMode::Zero;

  std::int64_t out_h() const { return (h + 2 * pad - k) / stride + 1; }
  std::int64_t out_w() const { return (w + 2 * pad - k) / stride + 1; }
  std::int64_t padded_h() const { return h + 2 * pad; }
  std::int64_t padded_w() const { return w + 2 * pad; }
  std::int64_t cin_per_group() const { return cin / groups; }
  std::int64_t cout_per_group() const { return cout / groups; }
  // Throws ShapeError on inconsistent geometry.
  void validate() const;
};

// Copies x (n,cin,h,w) into the padded buffer (n,cin,h+2p,w+2p).
template <typename T>
void pad_input(const ConvGeometry& g, const T* x, T* padded);

// Accumulates the padded-domain gradient back onto the unpadded input
// gradient; reflected border cells add into their mirror sources.
template <typename T>
void fold_padded_grad(const ConvGeometry& g, const T* padded_grad, T* grad);

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* padded, const T* weight, const T* bias, T* out);
// Accumulates into padded_grad (must be zero-initialized by the caller).
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dout, const T* weight, T* padded_grad);
// Overwrites dweight / dbias (dbias may be null) with 64-bit-accumulated sums.
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* padded, const T* dout, T* dweight,
                            T* dbias);

template <typename T>
void dense_forward(std::int64_t n, std::int64_t in, std::int64_t out, const T* x, const T* weight,
                   const T* bias, T* y);

// Same-size reflect-boundary convolution of one plane with a square kernel.
void filter_plane(std::int64_t h, std::int64_t w, const float* src, std::int64_t ksize,
                  const double* kernel, float* dst);

}  // namespace reference

namespace parallel {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* padded, const T* weight, const T* bias, T* out);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dout, const T* weight, T* padded_grad);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* padded, const T* dout, T* dweight,
                            T* dbias);

template <typename T>
void dense_forward(std::int64_t n, std::int64_t in, std::int64_t out, const T* x, const T* weight,
                   const T* bias, T* y);
template <typename T>
void dense_backward(std::int64_t n, std::int64_t in, std::int64_t out, const T* x, const T* weight,
                    const T* dy, T* dx, T* dweight, T* dbias);

void filter_plane(std::int64_t h, std::int64_t w, const float* src, std::int64_t ksize,
                  const double* kernel, float* dst);
// Rank-1 kernel given as outer(taps, taps); same result contract as filter_plane
// up to floating-point reassociation.
void filter_plane_separable(std::int64_t h, std::int64_t w, const float* src,
                            std::span<const double> taps, float* dst);

}  // namespace parallel

// Index of padded coordinate i in [0, n) under the given mode; -1 for zero fill.
inline std::int64_t source_index(std::int64_t i, std::int64_t n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  if (mode == PadMode::Zero) return -1;
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace cdcl::kernels
