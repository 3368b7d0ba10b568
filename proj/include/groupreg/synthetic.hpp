#pragma once

// Procedural scenes for desk-scale experiments: a multi-octave value-noise
// world with road-like ridges, historical views under planted rigid
// transforms with optional scale drift, per-image corruption and changed
// regions in the reference.

#include "groupreg/eval.hpp"
#include "groupreg/geometry.hpp"
#include "groupreg/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace groupreg {

/// Deterministic texture defined on continuous world coordinates (meters).
class WorldTexture {
 public:
  explicit WorldTexture(std::uint64_t seed) : seed_(seed) {}

  double operator()(Point2 q) const {
    static constexpr double kCells[] = {96.0, 48.0, 24.0, 12.0, 6.0};
    static constexpr double kAmps[] = {0.35, 0.25, 0.18, 0.12, 0.10};
    double fbm = 0.0;
    for (int o = 0; o < 5; ++o) fbm += kAmps[o] * noise(q.x / kCells[o], q.y / kCells[o], seed_ + 17u * o);
    const double road = std::max(ridge(q, 90.0, seed_ + 101), ridge(q, 140.0, seed_ + 211));
    return std::clamp(0.1 + 0.6 * fbm + 0.3 * road, 0.0, 1.0);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
    const std::uint64_t h = mix(mix(seed ^ static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ULL) ^
                                static_cast<std::uint64_t>(iy) * 0x85157af5ULL);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }
  static double smooth(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }
  static double noise(double x, double y, std::uint64_t seed) {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
    const double u = smooth(x - fx), v = smooth(y - fy);
    const double a = lattice(ix, iy, seed), b = lattice(ix + 1, iy, seed);
    const double c = lattice(ix, iy + 1, seed), d = lattice(ix + 1, iy + 1, seed);
    return (a * (1 - u) + b * u) * (1 - v) + (c * (1 - u) + d * u) * v;
  }
  /// Thin bright lines along the 0.5 level set of a coarse noise field.
  static double ridge(Point2 q, double cell, std::uint64_t seed) {
    const double n = noise(q.x / cell, q.y / cell, seed);
    const double d = std::abs(n - 0.5);
    return std::clamp(1.0 - d / 0.035, 0.0, 1.0);
  }

  std::uint64_t seed_;
};

struct ImageCorruption {
  double occlusion = 0.0;    ///< image fraction replaced by unrelated texture
  double brightness = 0.0;   ///< additive offset
  double noise_sigma = 0.0;  ///< additive Gaussian noise
  double scale = 1.0;        ///< historical meters per reference meter
};

/// Part of image k's footprint in the reference showing the historical world
/// displaced by `decoy_shift`, covering `fraction` of the footprint area.
struct ReferenceChange {
  int image = 0;
  double fraction = 0.8;
  Point2 decoy_shift{120.0, 90.0};
};

struct SyntheticSpec {
  int width = 512;  ///< historical images, pixels
  int height = 512;
  int ref_width = 0;  ///< reference size; 0 means the historical size
  int ref_height = 0;
  double meters_per_px = 1.0;
  std::uint64_t texture_seed = 1;
  std::uint64_t corruption_seed = 2;
  std::vector<RigidTransform> planted;        ///< historical k -> reference
  std::vector<ImageCorruption> corruption;    ///< empty or one per image
  std::vector<ReferenceChange> reference_changes;
  int gt_grid = 5;  ///< ground-truth points per axis
};

struct SyntheticScenario {
  ImageGrid reference;
  std::vector<ImageGrid> historical;
  std::vector<std::string> ids;
  std::vector<RigidTransform> truth;
  std::vector<double> scales;
  GroundTruth ground_truth;
};

/// Maps historical coordinates into the reference: q = R(gamma)(s p) + v.
inline Point2 scaled_rigid(const RigidTransform& t, double scale, Point2 p) {
  return apply_rigid(t, {scale * p.x, scale * p.y});
}

/// Fraction of the historical image whose footprint lands inside the
/// reference extent.
inline double footprint_overlap(int w, int h, double mpp, const RigidTransform& t, double scale, const ImageGrid& ref) {
  const double hx = 0.5 * ref.extent_x(), hy = 0.5 * ref.extent_y();
  int inside = 0, total = 0;
  for (int j = 0; j < 64; ++j) {
    for (int i = 0; i < 64; ++i) {
      const Point2 p{((i + 0.5) / 64.0 - 0.5) * w * mpp, ((j + 0.5) / 64.0 - 0.5) * h * mpp};
      const Point2 q = scaled_rigid(t, scale, p);
      ++total;
      if (std::abs(q.x) <= hx && std::abs(q.y) <= hy) ++inside;
    }
  }
  return static_cast<double>(inside) / total;
}

/// Renders a historical view without corruption.
inline ImageGrid render_view(const WorldTexture& world, int w, int h, double mpp, const RigidTransform& t,
                             double scale) {
  ImageGrid img(w, h, mpp);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) img.at(c, r) = static_cast<float>(world(scaled_rigid(t, scale, img.to_metric(c, r))));
  }
  return img;
}

inline void apply_corruption(ImageGrid& img, const ImageCorruption& cc, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  if (cc.occlusion > 0.0) {
    const WorldTexture other(seed ^ 0xa5a5a5a5ULL);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(img.width()) * img.height(), 0);
    std::size_t covered = 0;
    const auto target = static_cast<std::size_t>(cc.occlusion * mask.size());
    const int lo = std::max(8, std::min(img.width(), img.height()) / 12);
    const int hi = std::max(lo + 1, std::min(img.width(), img.height()) / 3);
    std::uniform_int_distribution<int> side(lo, hi);
    while (covered < target) {
      const int rw = side(rng), rh = side(rng);
      const int x0 = std::uniform_int_distribution<int>(-rw / 2, img.width() - rw / 2)(rng);
      const int y0 = std::uniform_int_distribution<int>(-rh / 2, img.height() - rh / 2)(rng);
      const Point2 offset{std::uniform_real_distribution<double>(-5000, 5000)(rng),
                          std::uniform_real_distribution<double>(-5000, 5000)(rng)};
      for (int r = std::max(0, y0); r < std::min(img.height(), y0 + rh) && covered < target; ++r) {
        for (int c = std::max(0, x0); c < std::min(img.width(), x0 + rw) && covered < target; ++c) {
          auto& m = mask[static_cast<std::size_t>(r) * img.width() + c];
          if (!m) {
            m = 1;
            ++covered;
          }
          img.at(c, r) = static_cast<float>(other(img.to_metric(c, r) + offset));
        }
      }
    }
  }
  std::normal_distribution<double> noise(0.0, cc.noise_sigma > 0.0 ? cc.noise_sigma : 1.0);
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      double v = img.at(c, r) + cc.brightness;
      if (cc.noise_sigma > 0.0) v += noise(rng);
      img.at(c, r) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
}

inline SyntheticScenario generate_scenario(const SyntheticSpec& spec) {
  const int n = static_cast<int>(spec.planted.size());
  if (n < 1) throw Error("scenario needs at least one historical image");
  if (!spec.corruption.empty() && static_cast<int>(spec.corruption.size()) != n) {
    throw Error("corruption list must be empty or have one entry per image");
  }
  const double mpp = spec.meters_per_px;
  const WorldTexture world(spec.texture_seed);
  SyntheticScenario sc;
  sc.truth = spec.planted;
  for (int k = 0; k < n; ++k) sc.scales.push_back(spec.corruption.empty() ? 1.0 : spec.corruption[k].scale);
  for (double s : sc.scales) {
    if (s < 0.7 - 1e-12 || s > 1.3 + 1e-12) throw Error("scale drift must lie in [0.7, 1.3]");
  }

  // Reference with changed regions.
  const int rw = spec.ref_width > 0 ? spec.ref_width : spec.width;
  const int rh = spec.ref_height > 0 ? spec.ref_height : spec.height;
  sc.reference = ImageGrid(rw, rh, mpp);
  for (const ReferenceChange& ch : spec.reference_changes) {
    if (ch.image < 0 || ch.image >= n) throw Error("reference change names an unknown image");
    if (!(ch.fraction > 0.0 && ch.fraction <= 1.0)) throw Error("reference change fraction must lie in (0, 1]");
  }
  const double half_w = 0.5 * spec.width * mpp, half_h = 0.5 * spec.height * mpp;
  for (int r = 0; r < rh; ++r) {
    for (int c = 0; c < rw; ++c) {
      const Point2 q = sc.reference.to_metric(c, r);
      Point2 src = q;
      for (const ReferenceChange& ch : spec.reference_changes) {
        const RigidTransform& t = spec.planted[ch.image];
        const Point2 p = rotate(-t.gamma(), q - t.translation());
        const double s = sc.scales[ch.image] * std::sqrt(ch.fraction);
        if (std::abs(p.x) <= s * half_w && std::abs(p.y) <= s * half_h) {
          src = q - ch.decoy_shift;
          break;
        }
      }
      sc.reference.at(c, r) = static_cast<float>(world(src));
    }
  }

  for (int k = 0; k < n; ++k) {
    const double ov = footprint_overlap(spec.width, spec.height, mpp, spec.planted[k], sc.scales[k], sc.reference);
    if (ov < 0.25) {
      throw Error("image " + std::to_string(k) + " overlaps the reference by " + std::to_string(ov) +
                  ", below 25%; scenario infeasible");
    }
    ImageGrid img = render_view(world, spec.width, spec.height, mpp, spec.planted[k], sc.scales[k]);
    if (!spec.corruption.empty()) apply_corruption(img, spec.corruption[k], spec.corruption_seed * 7919u + k);
    sc.historical.push_back(std::move(img));
    sc.ids.push_back("hist" + std::to_string(k));

    auto& gt = sc.ground_truth[sc.ids.back()];
    for (int j = 0; j < spec.gt_grid; ++j) {
      for (int i = 0; i < spec.gt_grid; ++i) {
        const double fx = spec.gt_grid > 1 ? (static_cast<double>(i) / (spec.gt_grid - 1) - 0.5) * 0.8 : 0.0;
        const double fy = spec.gt_grid > 1 ? (static_cast<double>(j) / (spec.gt_grid - 1) - 0.5) * 0.8 : 0.0;
        const Point2 p{fx * 2 * half_w, fy * 2 * half_h};
        const Point2 q = scaled_rigid(spec.planted[k], sc.scales[k], p);
        if (std::abs(q.x) <= 0.5 * rw * mpp && std::abs(q.y) <= 0.5 * rh * mpp) gt.push_back({p, q});
      }
    }
    if (gt.empty()) gt.push_back({{0, 0}, scaled_rigid(spec.planted[k], sc.scales[k], {0, 0})});
  }
  return sc;
}

}  // namespace groupreg
