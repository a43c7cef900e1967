#include "cdcl/degradation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cdcl/kernels.hpp"

namespace cdcl::degradation {

namespace {

constexpr double kMaxWidth = 4.5;

void normalize(std::vector<double>& w) {
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
}

void check_size(int size) {
  if (size < 3 || size % 2 == 0) throw ConfigError("blur kernel size must be odd and >= 3");
}

}  // namespace

BlurKernel iso_gaussian_kernel(int size, double sigma) {
  check_size(size);
  if (!(sigma > 0.0)) throw ConfigError("isotropic blur sigma must be positive");
  BlurKernel k;
  k.size = size;
  const int r = size / 2;
  k.taps.resize(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) {
    const double d = i - r;
    k.taps[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
  }
  normalize(k.taps);
  k.weights.resize(static_cast<std::size_t>(size) * size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      k.weights[static_cast<std::size_t>(i) * size + j] = k.taps[static_cast<std::size_t>(i)] * k.taps[static_cast<std::size_t>(j)];
  return k;
}

BlurKernel aniso_gaussian_kernel(int size, double lambda1, double lambda2, double angle) {
  check_size(size);
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0)) throw ConfigError("anisotropic eigenvalues must be positive");
  const double c = std::cos(angle), s = std::sin(angle);
  // Sigma = R diag(l1, l2) R^T; its inverse swaps in reciprocal eigenvalues.
  const double i1 = 1.0 / lambda1, i2 = 1.0 / lambda2;
  const double a = c * c * i1 + s * s * i2;
  const double b = c * s * (i1 - i2);
  const double d = s * s * i1 + c * c * i2;
  BlurKernel k;
  k.size = size;
  const int r = size / 2;
  k.weights.resize(static_cast<std::size_t>(size) * size);
  for (int i = 0; i < size; ++i) {
    const double y = i - r;
    for (int j = 0; j < size; ++j) {
      const double x = j - r;
      k.weights[static_cast<std::size_t>(i) * size + j] = std::exp(-0.5 * (a * x * x + 2.0 * b * x * y + d * y * y));
    }
  }
  normalize(k.weights);
  return k;
}

Image blur(const Image& img, const BlurKernel& kernel) {
  if (kernel.size < 1 || kernel.weights.size() != static_cast<std::size_t>(kernel.size) * kernel.size) {
    throw ShapeError("blur: malformed kernel");
  }
  if (kernel.size > img.width || kernel.size > img.height) throw ShapeError("blur: kernel larger than image");
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  std::vector<float> src(plane), dst(plane);
  Image out(img.width, img.height, img.channels);
  for (int c = 0; c < img.channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) src[p] = img.data[p * img.channels + c];
    if (!kernel.taps.empty()) {
      kernels::parallel::filter_plane_separable(img.height, img.width, src.data(), kernel.taps, dst.data());
    } else {
      kernels::parallel::filter_plane(img.height, img.width, src.data(), kernel.size, kernel.weights.data(),
                                      dst.data());
    }
    for (std::size_t p = 0; p < plane; ++p) out.data[p * img.channels + c] = dst[p];
  }
  out.clamp();
  return out;
}

Image add_gaussian_noise(const Image& img, double level, std::mt19937_64& rng) {
  if (!(level >= 0.0)) throw ConfigError("noise level must be non-negative");
  if (level == 0.0) return img;
  Image out = img;
  std::normal_distribution<double> normal(0.0, level / 255.0);
  for (auto& v : out.data) v = static_cast<float>(std::clamp(v + normal(rng), 0.0, 1.0));
  return out;
}

namespace {

constexpr std::array<int, 64> kLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr std::array<int, 64> kChromaTable = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

struct DctBasis {
  double c[8][8];
  DctBasis() {
    for (int u = 0; u < 8; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) c[u][x] = alpha * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
  }
};

const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

void dct8x8(const double in[64], double out[64]) {
  const auto& c = basis().c;
  double tmp[64];
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int y = 0; y < 8; ++y) acc += c[u][y] * in[y * 8 + x];
      tmp[u * 8 + x] = acc;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double acc = 0.0;
      for (int x = 0; x < 8; ++x) acc += c[v][x] * tmp[u * 8 + x];
      out[u * 8 + v] = acc;
    }
}

void idct8x8(const double in[64], double out[64]) {
  const auto& c = basis().c;
  double tmp[64];
  for (int y = 0; y < 8; ++y)
    for (int v = 0; v < 8; ++v) {
      double acc = 0.0;
      for (int u = 0; u < 8; ++u) acc += c[u][y] * in[u * 8 + v];
      tmp[y * 8 + v] = acc;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int v = 0; v < 8; ++v) acc += c[v][x] * tmp[y * 8 + v];
      out[y * 8 + x] = acc;
    }
}

double round_byte(double v) { return std::clamp(std::floor(v + 0.5), 0.0, 255.0); }

}  // namespace

std::vector<int> jpeg_quant_table(int quality, int component) {
  if (quality < 1 || quality > 100) throw ConfigError("JPEG quality must lie in [1, 100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  const auto& base = component == 0 ? kLumaTable : kChromaTable;
  std::vector<int> table(64);
  for (int i = 0; i < 64; ++i) table[static_cast<std::size_t>(i)] = std::max(1, (base[static_cast<std::size_t>(i)] * scale + 50) / 100);
  return table;
}

Image jpeg_degrade(const Image& img, int quality) {
  if (img.channels != 3) throw ShapeError("jpeg_degrade: 3-channel input required");
  const std::vector<int> tables[2] = {jpeg_quant_table(quality, 0), jpeg_quant_table(quality, 1)};
  const int pw = (img.width + 7) / 8 * 8;
  const int ph = (img.height + 7) / 8 * 8;
  const Image padded = imaging::pad_edge(img, pw, ph);

  std::vector<double> planes[3];
  for (auto& p : planes) p.resize(static_cast<std::size_t>(pw) * ph);
  for (std::size_t p = 0; p < planes[0].size(); ++p) {
    const double r = imaging::to_byte(padded.data[p * 3]);
    const double g = imaging::to_byte(padded.data[p * 3 + 1]);
    const double b = imaging::to_byte(padded.data[p * 3 + 2]);
    planes[0][p] = 0.299 * r + 0.587 * g + 0.114 * b;
    planes[1][p] = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    planes[2][p] = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
  }

  for (int comp = 0; comp < 3; ++comp) {
    const std::vector<int>& q = tables[comp == 0 ? 0 : 1];
    std::vector<double>& plane = planes[comp];
    for (int by = 0; by < ph; by += 8) {
      for (int bx = 0; bx < pw; bx += 8) {
        double block[64], coef[64];
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) block[y * 8 + x] = plane[static_cast<std::size_t>(by + y) * pw + bx + x] - 128.0;
        dct8x8(block, coef);
        for (int i = 0; i < 64; ++i) {
          const double step = q[static_cast<std::size_t>(i)];
          coef[i] = std::nearbyint(coef[i] / step) * step;
        }
        idct8x8(coef, block);
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) plane[static_cast<std::size_t>(by + y) * pw + bx + x] = block[y * 8 + x] + 128.0;
      }
    }
  }

  Image out(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * pw + x;
      const double yy = planes[0][p], cb = planes[1][p] - 128.0, cr = planes[2][p] - 128.0;
      out.at(y, x, 0) = static_cast<float>(round_byte(yy + 1.402 * cr) / 255.0);
      out.at(y, x, 1) = static_cast<float>(round_byte(yy - 0.344136 * cb - 0.714136 * cr) / 255.0);
      out.at(y, x, 2) = static_cast<float>(round_byte(yy + 1.772 * cb) / 255.0);
    }
  }
  return out;
}

void DegradationSpec::validate() const {
  if (scale < 2 || scale > 4) throw ConfigError("scale must be 2, 3 or 4");
  check_size(kernel_size);
  switch (blur.kind) {
    case BlurKind::None:
      break;
    case BlurKind::Isotropic:
      if (!(blur.sigma > 0.0 && blur.sigma <= kMaxWidth)) throw ConfigError("isotropic sigma must lie in (0, 4.5]");
      break;
    case BlurKind::Anisotropic:
      if (!(blur.lambda1 > 0.0 && blur.lambda1 <= kMaxWidth && blur.lambda2 > 0.0 && blur.lambda2 <= kMaxWidth)) {
        throw ConfigError("anisotropic eigenvalues must lie in (0, 4.5]");
      }
      if (!(blur.angle >= 0.0 && blur.angle < std::numbers::pi)) throw ConfigError("blur angle must lie in [0, pi)");
      break;
  }
  if (!(noise_level >= 0.0)) throw ConfigError("noise level must be non-negative");
  if (jpeg_quality && (*jpeg_quality < 1 || *jpeg_quality > 100)) throw ConfigError("JPEG quality must lie in [1, 100]");
}

std::string DegradationSpec::label() const {
  std::ostringstream os;
  os.precision(3);
  switch (blur.kind) {
    case BlurKind::None:
      break;
    case BlurKind::Isotropic:
      os << 'b' << blur.sigma;
      break;
    case BlurKind::Anisotropic:
      os << 'a' << blur.lambda1 << '_' << blur.lambda2 << '_' << blur.angle;
      break;
  }
  if (noise_level > 0.0) os << 'n' << noise_level;
  if (jpeg_quality) os << 'j' << *jpeg_quality;
  const std::string s = os.str();
  return s.empty() ? "bic" : s;
}

Image degrade(const Image& hr, const DegradationSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  if (hr.width % spec.scale != 0 || hr.height % spec.scale != 0) {
    throw ShapeError("degrade: HR dimensions must be divisible by the scale");
  }
  Image cur = hr;
  if (spec.blur.kind == BlurKind::Isotropic) {
    cur = blur(cur, iso_gaussian_kernel(spec.kernel_size, spec.blur.sigma));
  } else if (spec.blur.kind == BlurKind::Anisotropic) {
    cur = blur(cur, aniso_gaussian_kernel(spec.kernel_size, spec.blur.lambda1, spec.blur.lambda2, spec.blur.angle));
  }
  if (spec.downsampler == Downsampler::Bicubic) {
    cur = imaging::bicubic_resize(cur, {1, spec.scale}, true);
  } else {
    Image small(cur.width / spec.scale, cur.height / spec.scale, cur.channels);
    for (int y = 0; y < small.height; ++y)
      for (int x = 0; x < small.width; ++x)
        for (int c = 0; c < cur.channels; ++c) small.at(y, x, c) = cur.at(y * spec.scale, x * spec.scale, c);
    cur = std::move(small);
  }
  if (spec.noise_level > 0.0) cur = add_gaussian_noise(cur, spec.noise_level, rng);
  if (spec.jpeg_quality) {
    if (cur.channels == 3) {
      cur = jpeg_degrade(cur, *spec.jpeg_quality);
    } else {
      Image rgb(cur.width, cur.height, 3);
      for (std::size_t p = 0; p < cur.data.size(); ++p)
        for (int c = 0; c < 3; ++c) rgb.data[p * 3 + static_cast<std::size_t>(c)] = cur.data[p];
      const Image back = jpeg_degrade(rgb, *spec.jpeg_quality);
      for (std::size_t p = 0; p < cur.data.size(); ++p) cur.data[p] = back.data[p * 3];
    }
  }
  return cur;
}

Image degrade(const Image& hr, const DegradationSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return degrade(hr, spec, rng);
}

DegradationSpec sample_spec(const DegradationSetting& setting, int scale, std::mt19937_64& rng) {
  DegradationSpec spec;
  spec.scale = scale;
  spec.kernel_size = setting.kernel_size;
  spec.downsampler = setting.downsampler;
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto coin = [&rng] { return std::bernoulli_distribution(0.5)(rng); };
  switch (setting.preset) {
    case 1:
      spec.blur.kind = BlurKind::Isotropic;
      if (setting.iso_widths.empty()) {
        spec.blur.sigma = uniform(0.2, 4.0);
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, setting.iso_widths.size() - 1);
        spec.blur.sigma = setting.iso_widths[pick(rng)];
      }
      break;
    case 2:
      spec.blur.kind = BlurKind::Anisotropic;
      spec.blur.lambda1 = uniform(0.2, 4.0);
      spec.blur.lambda2 = uniform(0.2, 4.0);
      spec.blur.angle = uniform(0.0, std::numbers::pi);
      spec.noise_level = uniform(0.0, 25.0);
      break;
    case 3: {
      const bool use_blur = coin(), use_noise = coin(), use_jpeg = coin();
      if (use_blur) {
        spec.blur.kind = BlurKind::Isotropic;
        spec.blur.sigma = uniform(0.1, 3.0);
      }
      if (use_noise) spec.noise_level = uniform(1.0, 30.0);
      if (use_jpeg) spec.jpeg_quality = std::uniform_int_distribution<int>(40, 95)(rng);
      break;
    }
    default:
      throw ConfigError("degradation preset must be 1, 2 or 3");
  }
  spec.validate();
  return spec;
}

namespace {

const char* kind_name(BlurKind k) {
  switch (k) {
    case BlurKind::Isotropic:
      return "iso";
    case BlurKind::Anisotropic:
      return "aniso";
    default:
      return "none";
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out.precision(17);
  out << kManifestHeader << '\n';
  for (const auto& r : rows) {
    const auto& b = r.spec.blur;
    const double first = b.kind == BlurKind::Anisotropic ? b.lambda1 : b.sigma;
    out << r.hr_path << ',' << r.lr_path << ',' << kind_name(b.kind) << ',' << first << ',' << b.lambda2 << ','
        << b.angle << ',' << r.spec.noise_level << ',';
    if (r.spec.jpeg_quality) out << *r.spec.jpeg_quality;
    out << ',' << r.spec.scale << ',' << r.seed << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + path.string());
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) throw FormatError("bad manifest header in " + path.string());
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 10) throw FormatError("bad manifest row: " + line);
    try {
      ManifestRow r;
      r.hr_path = f[0];
      r.lr_path = f[1];
      auto& b = r.spec.blur;
      if (f[2] == "iso") {
        b.kind = BlurKind::Isotropic;
        b.sigma = std::stod(f[3]);
      } else if (f[2] == "aniso") {
        b.kind = BlurKind::Anisotropic;
        b.lambda1 = std::stod(f[3]);
        b.lambda2 = std::stod(f[4]);
        b.angle = std::stod(f[5]);
      } else if (f[2] != "none") {
        throw FormatError("unknown blur kind " + f[2]);
      }
      r.spec.noise_level = std::stod(f[6]);
      if (!f[7].empty()) r.spec.jpeg_quality = std::stoi(f[7]);
      r.spec.scale = std::stoi(f[8]);
      r.seed = std::stoull(f[9]);
      rows.push_back(std::move(r));
    } catch (const std::invalid_argument&) {
      throw FormatError("bad manifest row: " + line);
    } catch (const std::out_of_range&) {
      throw FormatError("bad manifest row: " + line);
    }
  }
  return rows;
}

}  // namespace cdcl::degradation
