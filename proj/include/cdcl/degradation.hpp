#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cdcl/imaging.hpp"

namespace cdcl::degradation {

using imaging::Image;

struct BlurKernel {
  int size = 0;
  std::vector<double> weights;  // size x size, row-major
  // Set for isotropic kernels: weights == outer(taps, taps).
  std::vector<double> taps;
};

BlurKernel iso_gaussian_kernel(int size, double sigma);
// lambda1 and lambda2 are the variances along the rotated axes.
BlurKernel aniso_gaussian_kernel(int size, double lambda1, double lambda2, double angle);

// Same-size per-channel convolution with reflect boundary.
Image blur(const Image& img, const BlurKernel& kernel);

// Adds N(0, (level/255)^2) per sample, then clamps.
Image add_gaussian_noise(const Image& img, double level, std::mt19937_64& rng);

// Baseline-JPEG quantization roundtrip without entropy coding: full-range
// YCbCr at 4:4:4, 8x8 DCT, IJG-scaled standard tables.
Image jpeg_degrade(const Image& img, int quality);
// IJG-scaled quantization table (0 = luminance, 1 = chrominance), row-major 8x8.
std::vector<int> jpeg_quant_table(int quality, int component);

enum class BlurKind { None, Isotropic, Anisotropic };
enum class Downsampler { Bicubic, Decimate };

struct BlurSpec {
  BlurKind kind = BlurKind::None;
  double sigma = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double angle = 0.0;
};

struct DegradationSpec {
  BlurSpec blur;
  double noise_level = 0.0;
  std::optional<int> jpeg_quality;
  int scale = 4;
  int kernel_size = 21;
  Downsampler downsampler = Downsampler::Bicubic;

  void validate() const;
  // Compact tag such as "b1.2", "b2n20j60" or "bic".
  std::string label() const;
};

// blur -> downsample by 1/scale -> noise -> JPEG.
Image degrade(const Image& hr, const DegradationSpec& spec, std::mt19937_64& rng);
Image degrade(const Image& hr, const DegradationSpec& spec, std::uint64_t seed);

struct DegradationSetting {
  int preset = 1;
  // Preset 1 only: when non-empty, sigma is drawn uniformly from this list.
  std::vector<double> iso_widths;
  int kernel_size = 21;
  Downsampler downsampler = Downsampler::Bicubic;
};

DegradationSpec sample_spec(const DegradationSetting& setting, int scale, std::mt19937_64& rng);

struct ManifestRow {
  std::string hr_path;
  std::string lr_path;
  DegradationSpec spec;
  std::uint64_t seed = 0;
};

inline constexpr const char* kManifestHeader =
    "hr_path,lr_path,blur_kind,sigma_or_l1,l2,theta,noise,quality,scale,seed";

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

}  // namespace cdcl::degradation
