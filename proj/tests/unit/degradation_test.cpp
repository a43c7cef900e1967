#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "cdcl/degradation.hpp"

using namespace cdcl;
using namespace cdcl::degradation;
using cdcl::imaging::Image;

namespace {

Image random_image(int w, int h, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  Image img(w, h, c);
  for (auto& v : img.data) v = u(rng);
  return img;
}

double kernel_sum(const BlurKernel& k) {
  double s = 0.0;
  for (double v : k.weights) s += v;
  return s;
}

// 8x8 orthonormal DCT coefficients of one block of an 8-bit plane.
std::vector<double> block_dct(const std::vector<double>& plane, int w, int bx, int by) {
  std::vector<double> out(64, 0.0);
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      const double au = u == 0 ? std::sqrt(0.125) : 0.5, av = v == 0 ? std::sqrt(0.125) : 0.5;
      double acc = 0.0;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          acc += plane[(by + y) * w + bx + x] * std::cos((2 * y + 1) * u * std::numbers::pi / 16) *
                 std::cos((2 * x + 1) * v * std::numbers::pi / 16);
      out[u * 8 + v] = au * av * acc;
    }
  return out;
}

}  // namespace

TEST(Kernels, IsoNormalizedSymmetric) {
  for (double sigma : {0.1, 1.2, 2.4, 3.6, 4.5}) {
    const BlurKernel k = iso_gaussian_kernel(21, sigma);
    EXPECT_NEAR(kernel_sum(k), 1.0, 1e-6);
    for (int i = 0; i < 21; ++i)
      for (int j = 0; j < 21; ++j) {
        const double v = k.weights[i * 21 + j];
        EXPECT_GE(v, 0.0);
        EXPECT_EQ(v, k.weights[j * 21 + i]);
        EXPECT_EQ(v, k.weights[(20 - i) * 21 + j]);
        EXPECT_EQ(v, k.weights[i * 21 + (20 - j)]);
      }
  }
  EXPECT_GT(iso_gaussian_kernel(21, 0.1).weights[10 * 21 + 10], 0.999);
}

TEST(Kernels, Errors) {
  EXPECT_THROW(iso_gaussian_kernel(20, 1.0), ConfigError);
  EXPECT_THROW(iso_gaussian_kernel(21, 0.0), ConfigError);
  EXPECT_THROW(aniso_gaussian_kernel(21, 0.0, 1.0, 0.0), ConfigError);
  EXPECT_THROW(aniso_gaussian_kernel(21, 1.0, -1.0, 0.0), ConfigError);
}

TEST(Kernels, AnisoWithEqualEigenvaluesIsIso) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> lam(0.2, 4.0), ang(0.0, std::numbers::pi);
  for (int t = 0; t < 50; ++t) {
    const double l = lam(rng), th = ang(rng);
    const BlurKernel a = aniso_gaussian_kernel(21, l, l, th);
    const BlurKernel b = iso_gaussian_kernel(21, std::sqrt(l));
    EXPECT_NEAR(kernel_sum(a), 1.0, 1e-6);
    for (std::size_t i = 0; i < a.weights.size(); ++i) EXPECT_NEAR(a.weights[i], b.weights[i], 1e-6);
  }
}

TEST(Kernels, AnisoMomentsAndPeriodicity) {
  const BlurKernel k = aniso_gaussian_kernel(21, 4.0, 0.2, 0.0);
  double vx = 0, vy = 0;
  for (int i = 0; i < 21; ++i)
    for (int j = 0; j < 21; ++j) {
      vx += k.weights[i * 21 + j] * (j - 10) * (j - 10);
      vy += k.weights[i * 21 + j] * (i - 10) * (i - 10);
    }
  EXPECT_GT(std::sqrt(vx), std::sqrt(vy));
  const BlurKernel p = aniso_gaussian_kernel(21, 3.0, 0.7, 0.4);
  const BlurKernel q = aniso_gaussian_kernel(21, 3.0, 0.7, 0.4 + std::numbers::pi);
  for (std::size_t i = 0; i < p.weights.size(); ++i) EXPECT_NEAR(p.weights[i], q.weights[i], 1e-12);
}

TEST(Blur, ConstantAndNearDelta) {
  const Image flat(32, 32, 3, 0.3f);
  for (const auto& k : {iso_gaussian_kernel(21, 2.0), aniso_gaussian_kernel(21, 3.0, 1.0, 0.5)}) {
    const Image out = blur(flat, k);
    for (float v : out.data) EXPECT_NEAR(v, 0.3f, 1e-6);
  }
  const Image img = random_image(24, 24, 3, 2);
  const Image out = blur(img, iso_gaussian_kernel(21, 0.1));
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(out.data[i], img.data[i], 1e-3);
  EXPECT_THROW(blur(Image(10, 30, 1), iso_gaussian_kernel(21, 1.0)), ShapeError);
}

TEST(Blur, MatchesQuadrupleLoop) {
  const Image img = random_image(16, 16, 1, 3);
  for (const auto& k : {iso_gaussian_kernel(7, 1.3), aniso_gaussian_kernel(9, 2.0, 0.5, 1.1)}) {
    const Image out = blur(img, k);
    const int r = k.size / 2;
    auto reflect = [](int i, int n) {
      while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
      return i;
    };
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          for (int j = -r; j <= r; ++j)
            acc += k.weights[(i + r) * k.size + (j + r)] * img.at(reflect(y - i, 16), reflect(x - j, 16), 0);
        EXPECT_NEAR(out.at(y, x, 0), acc, 1e-5);
      }
  }
}

TEST(Noise, Statistics) {
  const Image gray(1000, 1000, 1, 0.5f);
  std::mt19937_64 rng(5);
  const Image noisy = add_gaussian_noise(gray, 25.0, rng);
  double s = 0, s2 = 0;
  for (float v : noisy.data) {
    const double d = v - 0.5;
    s += d;
    s2 += d * d;
  }
  const double n = static_cast<double>(noisy.data.size());
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  EXPECT_NEAR(sd, 25.0 / 255.0, 0.03 * 25.0 / 255.0);
}

TEST(Noise, DeterminismAndIdentity) {
  const Image img = random_image(8, 8, 3, 1);
  std::mt19937_64 a(9), b(9), c(9);
  EXPECT_EQ(add_gaussian_noise(img, 10.0, a).data, add_gaussian_noise(img, 10.0, b).data);
  EXPECT_EQ(add_gaussian_noise(img, 0.0, c).data, img.data);
  EXPECT_THROW(add_gaussian_noise(img, -1.0, c), ConfigError);
}

TEST(Jpeg, QuantTables) {
  for (int v : jpeg_quant_table(100, 0)) EXPECT_EQ(v, 1);
  for (int v : jpeg_quant_table(100, 1)) EXPECT_EQ(v, 1);
  EXPECT_EQ(jpeg_quant_table(50, 0)[0], 16);
  EXPECT_EQ(jpeg_quant_table(10, 0)[0], 80);
  EXPECT_EQ(jpeg_quant_table(1, 0)[0], 800);
  EXPECT_THROW(jpeg_quant_table(0, 0), ConfigError);
  EXPECT_THROW(jpeg_quant_table(101, 0), ConfigError);
}

TEST(Jpeg, Quality100IsNearLossless) {
  Image img = random_image(19, 13, 3, 4);
  for (auto& v : img.data) v = imaging::to_byte(v) / 255.f;
  const Image out = jpeg_degrade(img, 100);
  ASSERT_EQ(out.width, 19);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_LE(std::abs(out.data[i] - img.data[i]), 3.0 / 255.0 + 1e-6);
}

TEST(Jpeg, LowQualityZeroesCoefficients) {
  Image img(32, 32, 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = ((x / 3 + y / 3) % 2) ? 1.f : 0.f;
  const Image out = jpeg_degrade(img, 40);
  std::vector<double> pin(32 * 32), pout(32 * 32);
  for (int i = 0; i < 32 * 32; ++i) {
    pin[i] = imaging::to_byte(img.data[i * 3]) - 128.0;
    pout[i] = imaging::to_byte(out.data[i * 3]) - 128.0;
  }
  for (int by = 0; by < 32; by += 8)
    for (int bx = 0; bx < 32; bx += 8) {
      int nin = 0, nout = 0;
      for (double c : block_dct(pin, 32, bx, by)) nin += std::abs(c) > 4.0;
      for (double c : block_dct(pout, 32, bx, by)) nout += std::abs(c) > 4.0;
      EXPECT_LT(nout, nin);
    }
}

TEST(Jpeg, ConstantImages) {
  // Mid-gray has a zero DC coefficient after level shift: exact at any quality.
  for (int q : {1, 10, 40, 75, 100}) {
    const Image out = jpeg_degrade(Image(16, 16, 3, 128.f / 255.f), q);
    for (float v : out.data) EXPECT_NEAR(v, 128.f / 255.f, 1.0 / 255.0 + 1e-6);
  }
  // Other levels stay within 1/255 once the DC step is at most 16.
  for (int q : {50, 75, 95, 100}) {
    for (int level : {0, 37, 200, 255}) {
      const Image out = jpeg_degrade(Image(16, 16, 3, level / 255.f), q);
      for (float v : out.data) EXPECT_NEAR(v, level / 255.f, 1.0 / 255.0 + 1e-6);
    }
  }
}

TEST(Degrade, PureBicubicAndOrder) {
  const Image hr = random_image(32, 24, 3, 6);
  DegradationSpec spec;
  const Image lr = degrade(hr, spec, 1);
  EXPECT_EQ(lr.width, 8);
  EXPECT_EQ(lr.height, 6);
  EXPECT_EQ(lr.data, imaging::bicubic_resize(hr, {1, 4}, true).data);
  EXPECT_EQ(spec.label(), "bic");

  spec.blur = {BlurKind::Isotropic, 2.0};
  spec.noise_level = 20;
  spec.jpeg_quality = 60;
  EXPECT_EQ(spec.label(), "b2n20j60");
  std::mt19937_64 rng(3);
  Image expected = blur(hr, iso_gaussian_kernel(21, 2.0));
  expected = imaging::bicubic_resize(expected, {1, 4}, true);
  expected = add_gaussian_noise(expected, 20, rng);
  expected = jpeg_degrade(expected, 60);
  EXPECT_EQ(degrade(hr, spec, 3).data, expected.data);
  EXPECT_EQ(degrade(hr, spec, 3).data, degrade(hr, spec, 3).data);
}

TEST(Degrade, ConstantAndErrors) {
  const Image flat(24, 24, 3, 0.6f);
  DegradationSpec spec;
  spec.blur = {BlurKind::Isotropic, 1.2};
  for (int s : {2, 3, 4}) {
    spec.scale = s;
    const Image lr = degrade(flat, spec, 0);
    EXPECT_EQ(lr.width, 24 / s);
    for (float v : lr.data) EXPECT_NEAR(v, 0.6f, 1e-4);
  }
  spec.scale = 5;
  EXPECT_THROW(degrade(flat, spec, 0), ConfigError);
  spec.scale = 4;
  EXPECT_THROW(degrade(Image(22, 24, 3), spec, 0), ShapeError);
  spec.blur.sigma = 5.0;
  EXPECT_THROW(degrade(flat, spec, 0), ConfigError);
}

TEST(Degrade, DecimateOption) {
  const Image hr = random_image(16, 16, 1, 2);
  DegradationSpec spec;
  spec.downsampler = Downsampler::Decimate;
  const Image lr = degrade(hr, spec, 0);
  EXPECT_EQ(lr.at(2, 3, 0), hr.at(8, 12, 0));
}

TEST(SampleSpec, PresetRanges) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 2000; ++t) {
    const auto s1 = sample_spec(DegradationSetting{1, {}}, 4, rng);
    EXPECT_EQ(s1.blur.kind, BlurKind::Isotropic);
    EXPECT_GE(s1.blur.sigma, 0.2);
    EXPECT_LE(s1.blur.sigma, 4.0);
    EXPECT_EQ(s1.noise_level, 0.0);
    EXPECT_FALSE(s1.jpeg_quality);
    const auto s2 = sample_spec(DegradationSetting{2, {}}, 4, rng);
    EXPECT_EQ(s2.blur.kind, BlurKind::Anisotropic);
    EXPECT_GE(s2.blur.angle, 0.0);
    EXPECT_LT(s2.blur.angle, std::numbers::pi);
    for (double l : {s2.blur.lambda1, s2.blur.lambda2}) {
      EXPECT_GE(l, 0.2);
      EXPECT_LE(l, 4.0);
    }
    EXPECT_LE(s2.noise_level, 25.0);
  }
  EXPECT_THROW(sample_spec(DegradationSetting{4, {}}, 4, rng), ConfigError);
}

TEST(SampleSpec, Preset3Bernoulli) {
  std::mt19937_64 rng(2);
  int blur = 0, noise = 0, jpeg = 0;
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    const auto s = sample_spec(DegradationSetting{3, {}}, 4, rng);
    blur += s.blur.kind != BlurKind::None;
    noise += s.noise_level > 0;
    jpeg += s.jpeg_quality.has_value();
    if (s.blur.kind != BlurKind::None) {
      EXPECT_GE(s.blur.sigma, 0.1);
      EXPECT_LE(s.blur.sigma, 3.0);
    }
    if (s.noise_level > 0) {
      EXPECT_GE(s.noise_level, 1.0);
    }
    if (s.jpeg_quality) {
      EXPECT_GE(*s.jpeg_quality, 40);
      EXPECT_LE(*s.jpeg_quality, 95);
    }
  }
  for (int count : {blur, noise, jpeg}) EXPECT_NEAR(count / double(n), 0.5, 0.02);
}

TEST(SampleSpec, DiscreteWidths) {
  std::mt19937_64 rng(3);
  DegradationSetting setting{1, {0.2, 2.6}};
  int low = 0;
  for (int t = 0; t < 200; ++t) {
    const double s = sample_spec(setting, 4, rng).blur.sigma;
    EXPECT_TRUE(s == 0.2 || s == 2.6);
    low += s == 0.2;
  }
  EXPECT_GT(low, 50);
  EXPECT_LT(low, 150);
}

TEST(Manifest, RoundTrip) {
  std::vector<ManifestRow> rows(2);
  rows[0].hr_path = "hr/a.ppm";
  rows[0].lr_path = "lr/a.ppm";
  rows[0].spec.blur = {BlurKind::Anisotropic, 0.0, 2.5, 0.3, 1.25};
  rows[0].spec.noise_level = 12.5;
  rows[0].seed = 42;
  rows[1].hr_path = "hr/b.ppm";
  rows[1].lr_path = "lr/b.ppm";
  rows[1].spec.blur = {BlurKind::Isotropic, 1.2};
  rows[1].spec.jpeg_quality = 70;
  rows[1].spec.scale = 3;
  const auto path = std::filesystem::temp_directory_path() / "cdcl_manifest.csv";
  write_manifest(path, rows);
  const auto back = read_manifest(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].spec.blur.lambda1, 2.5);
  EXPECT_EQ(back[0].spec.blur.angle, 1.25);
  EXPECT_EQ(back[0].spec.noise_level, 12.5);
  EXPECT_FALSE(back[0].spec.jpeg_quality);
  EXPECT_EQ(back[0].seed, 42u);
  EXPECT_EQ(back[1].spec.blur.sigma, 1.2);
  EXPECT_EQ(*back[1].spec.jpeg_quality, 70);
  EXPECT_EQ(back[1].spec.scale, 3);
}
