#pragma once

// Grayscale raster storage, PGM/PNG input and output, and the small set of
// filters the feature extractors need.

#include "groupreg/geometry.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace groupreg {

/// Row-major gray raster with values in [0, 1].
class ImageGrid {
 public:
  static constexpr int kMinSide = 64;

  ImageGrid() = default;

  ImageGrid(int width, int height, double meters_per_px = 1.0, float fill = 0.0f)
      : width_(width), height_(height), meters_per_px_(meters_per_px),
        pixels_(static_cast<std::size_t>(check_dims(width, height)), fill) {
    if (!(meters_per_px > 0.0)) throw Error("meters_per_px must be positive");
  }

  ImageGrid(int width, int height, std::vector<float> pixels, double meters_per_px = 1.0)
      : ImageGrid(width, height, meters_per_px) {
    if (pixels.size() != pixels_.size()) throw Error("pixel buffer does not match image size");
    for (float v : pixels) {
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f) throw Error("pixel values must lie in [0,1]");
    }
    pixels_ = std::move(pixels);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double meters_per_px() const { return meters_per_px_; }
  bool empty() const { return pixels_.empty(); }

  float at(int c, int r) const { return pixels_[static_cast<std::size_t>(r) * width_ + c]; }
  float& at(int c, int r) { return pixels_[static_cast<std::size_t>(r) * width_ + c]; }

  std::span<const float> pixels() const { return pixels_; }
  std::span<float> pixels() { return pixels_; }

  /// Extent in meters along x and y.
  double extent_x() const { return width_ * meters_per_px_; }
  double extent_y() const { return height_ * meters_per_px_; }

  /// Center-origin metric coordinates of pixel (c, r).
  Point2 to_metric(double c, double r) const {
    return {(c - 0.5 * (width_ - 1)) * meters_per_px_, (r - 0.5 * (height_ - 1)) * meters_per_px_};
  }
  /// Inverse of to_metric: returns fractional (column, row).
  Point2 to_pixel(Point2 p) const {
    return {p.x / meters_per_px_ + 0.5 * (width_ - 1), p.y / meters_per_px_ + 0.5 * (height_ - 1)};
  }

  bool contains_metric(Point2 p) const {
    const Point2 q = to_pixel(p);
    return q.x >= -0.5 && q.y >= -0.5 && q.x <= width_ - 0.5 && q.y <= height_ - 0.5;
  }

  /// Bilinear sample at fractional pixel coordinates; returns `outside` when
  /// the location is not covered by the raster.
  float sample(double c, double r, float outside = 0.0f) const {
    if (c < 0.0 || r < 0.0 || c > width_ - 1 || r > height_ - 1) return outside;
    const int c0 = std::min(static_cast<int>(c), width_ - 2);
    const int r0 = std::min(static_cast<int>(r), height_ - 2);
    const float fc = static_cast<float>(c - c0);
    const float fr = static_cast<float>(r - r0);
    const float top = at(c0, r0) * (1.0f - fc) + at(c0 + 1, r0) * fc;
    const float bot = at(c0, r0 + 1) * (1.0f - fc) + at(c0 + 1, r0 + 1) * fc;
    return top * (1.0f - fr) + bot * fr;
  }

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

 private:
  static long check_dims(int w, int h) {
    if (w < kMinSide || h < kMinSide) throw Error("images must be at least 64x64 pixels");
    return static_cast<long>(w) * h;
  }

  int width_ = 0;
  int height_ = 0;
  double meters_per_px_ = 1.0;
  std::vector<float> pixels_;
};

/// Float plane without range restrictions, used for intermediate results.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Plane() = default;
  Plane(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  float at(int c, int r) const { return data[static_cast<std::size_t>(r) * width + c]; }
  float& at(int c, int r) { return data[static_cast<std::size_t>(r) * width + c]; }
};

inline Plane to_plane(const ImageGrid& img) {
  Plane p(img.width(), img.height());
  std::copy(img.pixels().begin(), img.pixels().end(), p.data.begin());
  return p;
}

inline std::vector<float> gaussian_kernel_1d(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * i * i / (sigma * sigma));
    k[i + radius] = static_cast<float>(w);
    sum += w;
  }
  for (float& w : k) w = static_cast<float>(w / sum);
  return k;
}

/// Separable Gaussian blur with replicated borders.
inline Plane gaussian_blur(const Plane& in, double sigma) {
  if (sigma <= 0.0) return in;
  const std::vector<float> k = gaussian_kernel_1d(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  Plane tmp(in.width, in.height);
  Plane out(in.width, in.height);
  for (int r = 0; r < in.height; ++r) {
    for (int c = 0; c < in.width; ++c) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        const int cc = std::clamp(c + i, 0, in.width - 1);
        acc += k[i + radius] * in.at(cc, r);
      }
      tmp.at(c, r) = acc;
    }
  }
  for (int r = 0; r < in.height; ++r) {
    for (int c = 0; c < in.width; ++c) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        const int rr = std::clamp(r + i, 0, in.height - 1);
        acc += k[i + radius] * tmp.at(c, rr);
      }
      out.at(c, r) = acc;
    }
  }
  return out;
}

/// Half-resolution plane taking every second pixel.
inline Plane downsample2(const Plane& in) {
  Plane out(std::max(1, in.width / 2), std::max(1, in.height / 2));
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) out.at(c, r) = in.at(2 * c, 2 * r);
  }
  return out;
}

/// Gradient magnitude and direction (atan2(gy, gx) in image coordinates).
struct GradientField {
  int width = 0;
  int height = 0;
  std::vector<float> magnitude;
  std::vector<float> direction;

  float mag(int c, int r) const { return magnitude[static_cast<std::size_t>(r) * width + c]; }
  float dir(int c, int r) const { return direction[static_cast<std::size_t>(r) * width + c]; }
};

inline GradientField compute_gradients(const Plane& p) {
  GradientField g;
  g.width = p.width;
  g.height = p.height;
  g.magnitude.assign(p.data.size(), 0.0f);
  g.direction.assign(p.data.size(), 0.0f);
  for (int r = 0; r < p.height; ++r) {
    for (int c = 0; c < p.width; ++c) {
      const float gx = 0.5f * (p.at(std::min(c + 1, p.width - 1), r) - p.at(std::max(c - 1, 0), r));
      const float gy = 0.5f * (p.at(c, std::min(r + 1, p.height - 1)) - p.at(c, std::max(r - 1, 0)));
      const std::size_t i = static_cast<std::size_t>(r) * p.width + c;
      g.magnitude[i] = std::sqrt(gx * gx + gy * gy);
      g.direction[i] = std::atan2(gy, gx);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// File I/O

namespace detail {

inline void skip_pnm_space(std::istream& is) {
  while (is) {
    const int ch = is.peek();
    if (ch == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(ch)) {
      is.get();
    } else {
      break;
    }
  }
}

inline bool has_extension(const std::string& path, const std::string& ext) {
  if (path.size() < ext.size()) return false;
  std::string tail = path.substr(path.size() - ext.size());
  std::transform(tail.begin(), tail.end(), tail.begin(), [](unsigned char c) { return std::tolower(c); });
  return tail == ext;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

/// Reads binary (P5) or ASCII (P2) PGM with 8- or 16-bit samples.
inline ImageGrid read_pgm(const std::string& path, double meters_per_px = 1.0) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5" && magic != "P2") throw Error(path + ": not a PGM file");
  int w = 0, h = 0, maxval = 0;
  detail::skip_pnm_space(is);
  is >> w;
  detail::skip_pnm_space(is);
  is >> h;
  detail::skip_pnm_space(is);
  is >> maxval;
  if (!is || w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw Error(path + ": bad PGM header");
  std::vector<float> px(static_cast<std::size_t>(w) * h);
  const float scale = 1.0f / static_cast<float>(maxval);
  if (magic == "P2") {
    for (float& v : px) {
      int s;
      if (!(is >> s)) throw Error(path + ": truncated PGM");
      v = std::clamp(s * scale, 0.0f, 1.0f);
    }
  } else {
    is.get();
    const bool wide = maxval > 255;
    std::vector<unsigned char> raw(px.size() * (wide ? 2 : 1));
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
      throw Error(path + ": truncated PGM");
    }
    for (std::size_t i = 0; i < px.size(); ++i) {
      const int s = wide ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
      px[i] = std::clamp(s * scale, 0.0f, 1.0f);
    }
  }
  return ImageGrid(w, h, std::move(px), meters_per_px);
}

inline void write_pgm(const std::string& path, const ImageGrid& img, bool sixteen_bit = false) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  const int maxval = sixteen_bit ? 65535 : 255;
  os << "P5\n" << img.width() << ' ' << img.height() << '\n' << maxval << '\n';
  for (float v : img.pixels()) {
    const int s = static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * maxval));
    if (sixteen_bit) {
      os.put(static_cast<char>(s >> 8));
      os.put(static_cast<char>(s & 0xff));
    } else {
      os.put(static_cast<char>(s));
    }
  }
}

/// Reads 8/16-bit PNG; color inputs are converted to gray by libpng.
inline ImageGrid read_png(const std::string& path, double meters_per_px = 1.0) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw Error("libpng initialisation failed");
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  if (setjmp(png_jmpbuf(png))) throw Error(path + ": corrupt PNG");
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> buf(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (int r = 0; r < h; ++r) rows[r] = buf.data() + r * rowbytes;
  png_read_image(png, rows.data());
  std::vector<float> px(static_cast<std::size_t>(w) * h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      float v;
      if (out_depth == 16) {
        std::uint16_t s;
        std::memcpy(&s, rows[r] + 2 * c, 2);
        v = s / 65535.0f;
      } else {
        v = rows[r][c] / 255.0f;
      }
      px[static_cast<std::size_t>(r) * w + c] = v;
    }
  }
  return ImageGrid(w, h, std::move(px), meters_per_px);
}

inline void write_png(const std::string& path, const ImageGrid& img) {
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw Error("libpng initialisation failed");
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  if (setjmp(png_jmpbuf(png))) throw Error(path + ": PNG write failed");
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(img.width());
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      row[c] = static_cast<unsigned char>(std::lround(std::clamp(img.at(c, r), 0.0f, 1.0f) * 255.0f));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
}

/// Dispatches on extension (.png, otherwise PGM).
inline ImageGrid read_image(const std::string& path, double meters_per_px = 1.0) {
  if (detail::has_extension(path, ".png")) return read_png(path, meters_per_px);
  return read_pgm(path, meters_per_px);
}

inline void write_image(const std::string& path, const ImageGrid& img) {
  if (detail::has_extension(path, ".png")) {
    write_png(path, img);
  } else {
    write_pgm(path, img);
  }
}

}  // namespace groupreg
