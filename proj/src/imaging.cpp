#include "cdcl/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

namespace cdcl::imaging {

Image::Image(int w, int h, int c, float fill) : width(w), height(h), channels(c) {
  if (w < 1 || h < 1) throw ShapeError("Image: width and height must be >= 1");
  if (c != 1 && c != 3) throw ShapeError("Image: channels must be 1 or 3");
  data.assign(static_cast<std::size_t>(w) * h * c, fill);
}

void Image::clamp() {
  for (auto& v : data) v = std::clamp(v, 0.f, 1.f);
}

namespace {

void require_valid(const Image& img, const char* what) {
  if (img.width < 1 || img.height < 1 || (img.channels != 1 && img.channels != 3) ||
      img.data.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw ShapeError(std::string(what) + ": invalid image");
  }
}

// Reads the next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      ch = in.get();
    } else {
      break;
    }
  }
  while (ch != EOF && !std::isspace(ch) && ch != '#') {
    token.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  if (ch == '#') in.unget();
  return token;
}

int header_int(std::istream& in, const std::string& path) {
  const std::string tok = header_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    throw FormatError("malformed PPM header in " + path);
  }
  try {
    return std::stoi(tok);
  } catch (const std::exception&) {
    throw FormatError("malformed PPM header in " + path);
  }
}

}  // namespace

std::uint8_t to_byte(float v) {
  const double scaled = std::floor(static_cast<double>(v) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  const std::string magic = header_token(in);
  if (magic.size() == 2 && magic[0] == 'P' && magic[1] >= '1' && magic[1] <= '7' && magic != "P6") {
    throw UnsupportedFormatError("unsupported PNM variant " + magic + " in " + path.string());
  }
  if (magic != "P6") throw FormatError("not a PPM file: " + path.string());
  const int w = header_int(in, path.string());
  const int h = header_int(in, path.string());
  const int maxval = header_int(in, path.string());
  if (w < 1 || h < 1) throw FormatError("PPM dimensions must be positive in " + path.string());
  if (maxval != 255) throw UnsupportedFormatError("PPM maxval must be 255 in " + path.string());
  // header_token consumed exactly one whitespace byte after maxval.
  Image img(w, h, 3);
  std::vector<unsigned char> bytes(img.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError("truncated PPM payload in " + path.string());
  }
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = static_cast<float>(bytes[i]) / 255.f;
  return img;
}

void write_image(const Image& img, const std::filesystem::path& path) {
  require_valid(img, "write_image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  const std::size_t pixels = static_cast<std::size_t>(img.width) * img.height;
  std::vector<unsigned char> bytes(pixels * 3);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < 3; ++c) {
      const int src = img.channels == 3 ? c : 0;
      bytes[p * 3 + c] = to_byte(img.data[p * img.channels + src]);
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing image " + path.string());
}

Image rgb_to_ycbcr(const Image& img, YCbCrRange range) {
  require_valid(img, "rgb_to_ycbcr");
  if (img.channels != 3) throw ShapeError("rgb_to_ycbcr: 3-channel input required");
  Image out(img.width, img.height, 3);
  const std::size_t pixels = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t p = 0; p < pixels; ++p) {
    const double r = img.data[p * 3], g = img.data[p * 3 + 1], b = img.data[p * 3 + 2];
    double y, cb, cr;
    if (range == YCbCrRange::Full) {
      y = 0.299 * r + 0.587 * g + 0.114 * b;
      cb = 0.5 + (-0.168736 * r - 0.331264 * g + 0.5 * b);
      cr = 0.5 + (0.5 * r - 0.418688 * g - 0.081312 * b);
    } else {
      y = (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
      cb = 0.5 + (-37.797 * r - 74.203 * g + 112.0 * b) / 255.0;
      cr = 0.5 + (112.0 * r - 93.786 * g - 18.214 * b) / 255.0;
    }
    out.data[p * 3] = static_cast<float>(y);
    out.data[p * 3 + 1] = static_cast<float>(cb);
    out.data[p * 3 + 2] = static_cast<float>(cr);
  }
  out.clamp();
  return out;
}

Image ycbcr_to_rgb(const Image& img, YCbCrRange range) {
  require_valid(img, "ycbcr_to_rgb");
  if (img.channels != 3) throw ShapeError("ycbcr_to_rgb: 3-channel input required");
  Image out(img.width, img.height, 3);
  const std::size_t pixels = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t p = 0; p < pixels; ++p) {
    double y = img.data[p * 3];
    double cb = img.data[p * 3 + 1] - 0.5;
    double cr = img.data[p * 3 + 2] - 0.5;
    if (range == YCbCrRange::Studio) {
      y = (y * 255.0 - 16.0) / 219.0;
      cb = cb * 255.0 / 224.0;
      cr = cr * 255.0 / 224.0;
    }
    out.data[p * 3] = static_cast<float>(y + 1.402 * cr);
    out.data[p * 3 + 1] = static_cast<float>(y - 0.344136 * cb - 0.714136 * cr);
    out.data[p * 3 + 2] = static_cast<float>(y + 1.772 * cb);
  }
  out.clamp();
  return out;
}

double cubic_kernel(double x) {
  const double ax = std::abs(x);
  const double ax2 = ax * ax;
  const double ax3 = ax2 * ax;
  if (ax <= 1.0) return 1.5 * ax3 - 2.5 * ax2 + 1.0;
  if (ax <= 2.0) return -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0;
  return 0.0;
}

namespace {

struct Contribution {
  std::vector<int> index;
  std::vector<double> weight;
};

std::vector<Contribution> contributions(int in_len, int out_len, double scale, bool antialias) {
  const bool widen = antialias && scale < 1.0;
  const double support = widen ? 4.0 / scale : 4.0;
  const int taps = static_cast<int>(std::ceil(support)) + 2;
  std::vector<Contribution> result(static_cast<std::size_t>(out_len));
  for (int i = 0; i < out_len; ++i) {
    // Source coordinate of output pixel i (1-based centres, as in imresize).
    const double u = (i + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
    const int left = static_cast<int>(std::floor(u - support / 2.0));
    Contribution& c = result[static_cast<std::size_t>(i)];
    double total = 0.0;
    for (int t = 0; t < taps; ++t) {
      const int j = left + t;
      const double d = u - j;
      const double w = widen ? scale * cubic_kernel(scale * d) : cubic_kernel(d);
      if (w == 0.0) continue;
      c.index.push_back(std::clamp(j - 1, 0, in_len - 1));
      c.weight.push_back(w);
      total += w;
    }
    for (auto& w : c.weight) w /= total;
  }
  return result;
}

}  // namespace

Image bicubic_resize_to(const Image& img, int out_width, int out_height, bool antialias) {
  require_valid(img, "bicubic_resize");
  if (out_width < 1 || out_height < 1) throw ShapeError("bicubic_resize: output dims must be >= 1");
  const int ch = img.channels;
  const double sx = static_cast<double>(out_width) / img.width;
  const double sy = static_cast<double>(out_height) / img.height;
  const auto cols = contributions(img.width, out_width, sx, antialias);
  const auto rows = contributions(img.height, out_height, sy, antialias);

  std::vector<double> tmp(static_cast<std::size_t>(img.height) * out_width * ch);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const Contribution& c = cols[static_cast<std::size_t>(x)];
      for (int k = 0; k < ch; ++k) {
        double acc = 0.0;
        for (std::size_t t = 0; t < c.index.size(); ++t) acc += c.weight[t] * img.at(y, c.index[t], k);
        tmp[(static_cast<std::size_t>(y) * out_width + x) * ch + k] = acc;
      }
    }
  }
  Image out(out_width, out_height, ch);
  for (int y = 0; y < out_height; ++y) {
    const Contribution& r = rows[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_width; ++x) {
      for (int k = 0; k < ch; ++k) {
        double acc = 0.0;
        for (std::size_t t = 0; t < r.index.size(); ++t) {
          acc += r.weight[t] * tmp[(static_cast<std::size_t>(r.index[t]) * out_width + x) * ch + k];
        }
        out.at(y, x, k) = static_cast<float>(acc);
      }
    }
  }
  out.clamp();
  return out;
}

Image bicubic_resize(const Image& img, Scale scale, bool antialias) {
  if (scale.num <= 0 || scale.den <= 0) throw Error("bicubic_resize: scale must be positive");
  const auto scaled = [&](int len) {
    const std::int64_t n = static_cast<std::int64_t>(len) * scale.num;
    return static_cast<int>((n + scale.den - 1) / scale.den);
  };
  return bicubic_resize_to(img, scaled(img.width), scaled(img.height), antialias);
}

Image crop(const Image& img, int x0, int y0, int width, int height) {
  require_valid(img, "crop");
  if (x0 < 0 || y0 < 0 || width < 1 || height < 1 || x0 + width > img.width ||
      y0 + height > img.height) {
    throw ShapeError("crop: window out of bounds");
  }
  Image out(width, height, img.channels);
  const std::size_t row = static_cast<std::size_t>(width) * img.channels;
  for (int y = 0; y < height; ++y) {
    const float* src = &img.data[(static_cast<std::size_t>(y0 + y) * img.width + x0) * img.channels];
    std::copy(src, src + row, &out.data[static_cast<std::size_t>(y) * row]);
  }
  return out;
}

Image pad_edge(const Image& img, int width, int height) {
  require_valid(img, "pad_edge");
  if (width < img.width || height < img.height) throw ShapeError("pad_edge: target smaller than image");
  Image out(width, height, img.channels);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(y, img.height - 1);
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(x, img.width - 1);
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  require_valid(img, "flip_horizontal");
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    }
  }
  return out;
}

Image rotate90(const Image& img, int quarter_turns) {
  require_valid(img, "rotate90");
  const int turns = ((quarter_turns % 4) + 4) % 4;
  if (turns == 0) return img;
  Image cur = img;
  for (int t = 0; t < turns; ++t) {
    Image out(cur.height, cur.width, cur.channels);
    // Counter-clockwise: out(y, x) = cur(x, W - 1 - y).
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        for (int c = 0; c < cur.channels; ++c) out.at(y, x, c) = cur.at(x, cur.width - 1 - y, c);
      }
    }
    cur = std::move(out);
  }
  return cur;
}

std::vector<std::vector<double>> metric_planes(const Image& img, MetricOptions options, int& width,
                                               int& height) {
  require_valid(img, "metric");
  if (options.crop < 0 || 2 * options.crop >= std::min(img.width, img.height)) {
    throw ShapeError("metric: crop must be less than half the smaller dimension");
  }
  width = img.width - 2 * options.crop;
  height = img.height - 2 * options.crop;
  const bool luma = options.channels == ChannelMode::Y && img.channels == 3;
  const int planes = luma ? 1 : img.channels;
  std::vector<std::vector<double>> out(static_cast<std::size_t>(planes),
                                       std::vector<double>(static_cast<std::size_t>(width) * height));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t dst = static_cast<std::size_t>(y) * width + x;
      const int sy = y + options.crop, sx = x + options.crop;
      if (luma) {
        const double r = to_byte(img.at(sy, sx, 0));
        const double g = to_byte(img.at(sy, sx, 1));
        const double b = to_byte(img.at(sy, sx, 2));
        out[0][dst] = 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
      } else {
        for (int c = 0; c < planes; ++c) out[static_cast<std::size_t>(c)][dst] = to_byte(img.at(sy, sx, c));
      }
    }
  }
  return out;
}

namespace {

void require_same_dims(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw ShapeError(std::string(what) + ": dimension mismatch");
  }
}

constexpr int kWindow = 11;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWindow);
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * 1.5 * 1.5));
    total += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Separable valid-mode filtering with the Gaussian window.
std::vector<double> filter_valid(const std::vector<double>& plane, int width, int height,
                                 const std::vector<double>& win) {
  const int ow = width - kWindow + 1;
  const int oh = height - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(height) * ow);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += win[static_cast<std::size_t>(k)] * plane[static_cast<std::size_t>(y) * width + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += win[static_cast<std::size_t>(k)] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int width, int height) {
  static const std::vector<double> win = gaussian_window();
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, width, height, win);
  const auto mu_b = filter_valid(b, width, height, win);
  const auto s_aa = filter_valid(aa, width, height, win);
  const auto s_bb = filter_valid(bb, width, height, win);
  const auto s_ab = filter_valid(ab, width, height, win);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma2 = mu_a[i] * mu_a[i];
    const double mb2 = mu_b[i] * mu_b[i];
    const double mab = mu_a[i] * mu_b[i];
    const double va = s_aa[i] - ma2;
    const double vb = s_bb[i] - mb2;
    const double cov = s_ab[i] - mab;
    total += ((2.0 * mab + c1) * (2.0 * cov + c2)) / ((ma2 + mb2 + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace

double psnr(const Image& a, const Image& b, MetricOptions options) {
  require_same_dims(a, b, "psnr");
  int w = 0, h = 0;
  const auto pa = metric_planes(a, options, w, h);
  const auto pb = metric_planes(b, options, w, h);
  double sq = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < pa.size(); ++c) {
    for (std::size_t i = 0; i < pa[c].size(); ++i) {
      const double d = pa[c][i] - pb[c][i];
      sq += d * d;
    }
    count += pa[c].size();
  }
  const double mse = sq / static_cast<double>(count);
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Image& a, const Image& b, MetricOptions options) {
  require_same_dims(a, b, "ssim");
  int w = 0, h = 0;
  const auto pa = metric_planes(a, options, w, h);
  const auto pb = metric_planes(b, options, w, h);
  if (w < kWindow || h < kWindow) throw ShapeError("ssim: image smaller than the 11x11 window");
  double total = 0.0;
  for (std::size_t c = 0; c < pa.size(); ++c) total += ssim_plane(pa[c], pb[c], w, h);
  return total / static_cast<double>(pa.size());
}

Tensor to_tensor(const std::vector<Image>& images) {
  if (images.empty()) throw ShapeError("to_tensor: no images");
  const Image& first = images.front();
  const std::int64_t plane = static_cast<std::int64_t>(first.width) * first.height;
  Shape shape{static_cast<std::int64_t>(images.size()), first.channels, first.height, first.width};
  std::vector<float> values(static_cast<std::size_t>(shape.numel()));
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    require_valid(img, "to_tensor");
    if (img.width != first.width || img.height != first.height || img.channels != first.channels) {
      throw ShapeError("to_tensor: images must share dimensions");
    }
    float* dst = values.data() + static_cast<std::int64_t>(n) * shape.item();
    for (std::int64_t p = 0; p < plane; ++p) {
      for (int c = 0; c < img.channels; ++c) dst[c * plane + p] = img.data[static_cast<std::size_t>(p) * img.channels + c];
    }
  }
  return Tensor::from(shape, std::move(values));
}

Tensor to_tensor(const Image& img) { return to_tensor(std::vector<Image>{img}); }

Image from_tensor(const Tensor& t, std::int64_t index) {
  const Shape& s = t.shape();
  if (index < 0 || index >= s.n) throw ShapeError("from_tensor: index out of range");
  if (s.c != 1 && s.c != 3) throw ShapeError("from_tensor: channels must be 1 or 3");
  Image img(static_cast<int>(s.w), static_cast<int>(s.h), static_cast<int>(s.c));
  const auto src = t.data().subspan(static_cast<std::size_t>(index * s.item()), static_cast<std::size_t>(s.item()));
  const std::int64_t plane = s.plane();
  for (std::int64_t p = 0; p < plane; ++p) {
    for (std::int64_t c = 0; c < s.c; ++c) img.data[static_cast<std::size_t>(p * s.c + c)] = src[static_cast<std::size_t>(c * plane + p)];
  }
  img.clamp();
  return img;
}

}  // namespace cdcl::imaging
