#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "cdcl/error.hpp"
#include "cdcl/tensor.hpp"

namespace cdcl::imaging {

// Interleaved HWC samples in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.f);

  float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t size() const { return data.size(); }
  void clamp();
};

class UnsupportedFormatError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Binary PPM (P6, maxval 255).
Image read_image(const std::filesystem::path& path);
// Writes "P6\n<w> <h>\n255\n" then round-half-up bytes. Single-channel images
// are replicated to gray RGB.
void write_image(const Image& img, const std::filesystem::path& path);

// round(v * 255) with halves rounded up, clamped to [0, 255].
std::uint8_t to_byte(float v);

enum class YCbCrRange { Studio, Full };

// BT.601. Studio range puts Y in [16/255, 235/255]; chroma is centred on 0.5
// in both ranges.
Image rgb_to_ycbcr(const Image& img, YCbCrRange range);
Image ycbcr_to_rgb(const Image& img, YCbCrRange range);

// Positive rational scale num/den.
struct Scale {
  int num = 1;
  int den = 1;
  double value() const { return static_cast<double>(num) / den; }
};

// Cubic-convolution resampling (a = -0.5) with edge clamping. Output size is
// ceil(size * scale). With antialias on, downscaling stretches the kernel by
// 1/scale.
Image bicubic_resize(const Image& img, Scale scale, bool antialias = true);
Image bicubic_resize_to(const Image& img, int out_width, int out_height, bool antialias = true);

// Cubic convolution kernel, a = -0.5.
double cubic_kernel(double x);

Image crop(const Image& img, int x0, int y0, int width, int height);
// Extends the image to the given size by replicating the last row/column.
Image pad_edge(const Image& img, int width, int height);
Image flip_horizontal(const Image& img);
// Rotates by 90 degrees counter-clockwise `quarter_turns` times.
Image rotate90(const Image& img, int quarter_turns);

enum class ChannelMode { Y, Rgb };

// Returned by psnr for identical inputs.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

struct MetricOptions {
  int crop = 0;
  ChannelMode channels = ChannelMode::Y;
};

// Both images are quantized to 8-bit before comparison; Y mode uses studio
// luma on the 0-255 scale.
double psnr(const Image& a, const Image& b, MetricOptions options = {});
// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03,
// dynamic range 255, mean over valid window positions.
double ssim(const Image& a, const Image& b, MetricOptions options = {});

// Quantized 0-255 planes selected by the channel mode, after cropping.
std::vector<std::vector<double>> metric_planes(const Image& img, MetricOptions options,
                                               int& width, int& height);

// Stacks images into (N, C, H, W). All images must share dimensions.
Tensor to_tensor(const std::vector<Image>& images);
Tensor to_tensor(const Image& img);
// Item `index` of a (N, C, H, W) tensor, clamped to [0, 1].
Image from_tensor(const Tensor& t, std::int64_t index = 0);

}  // namespace cdcl::imaging
