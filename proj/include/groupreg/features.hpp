#pragma once

// Local features: dense grid sampling, Difference-of-Gaussians keypoints,
// SIFT-style 4x4x8 gradient histograms, exhaustive top-K and distance-ratio
// matching.
//
// Orientation convention: FeatureFrame::theta is the dominant gradient
// direction measured in the opposite rotational sense to RigidTransform,
// theta = -atan2(gy, gx). With this convention a match between frame a and
// frame b votes for gamma = theta_a - theta_b, and the rotation R(gamma)
// maps image-a offsets onto image-b offsets.

#include "groupreg/geometry.hpp"
#include "groupreg/image.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace groupreg {

struct FeatureFrame {
  double x = 0.0;      ///< meters, center origin
  double y = 0.0;      ///< meters, center origin
  double sigma = 1.0;  ///< meters; support radius for dense frames, blob scale for DoG frames
  double theta = 0.0;  ///< radians in [0, 2*pi)

  Point2 position() const { return {x, y}; }
  friend bool operator==(const FeatureFrame&, const FeatureFrame&) = default;
};

inline constexpr std::size_t kDescriptorSize = 128;
using Descriptor = std::array<float, kDescriptorSize>;

inline bool is_degenerate(const Descriptor& d) {
  return std::all_of(d.begin(), d.end(), [](float v) { return v == 0.0f; });
}

struct Feature {
  FeatureFrame frame;
  Descriptor descriptor{};
  friend bool operator==(const Feature&, const Feature&) = default;
};

struct Match {
  FeatureFrame frame_a;
  FeatureFrame frame_b;
  double similarity = 0.0;
  std::uint32_t index_a = 0;
  std::uint32_t index_b = 0;
};

/// Matches sorted by descending similarity.
struct MatchSet {
  std::vector<Match> matches;
  std::size_t size() const { return matches.size(); }
  bool empty() const { return matches.empty(); }
};

/// Guard added to descriptor distances before inversion.
inline constexpr double kSimilarityEpsilon = 1e-6;

inline double descriptor_distance(const Descriptor& a, const Descriptor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kDescriptorSize; ++i) {
    const float d = a[i] - b[i];
    acc += static_cast<double>(d) * d;
  }
  return std::sqrt(acc);
}

inline double similarity_from_distance(double d) { return 1.0 / (d + kSimilarityEpsilon); }

// ---------------------------------------------------------------------------
// Gradient pyramid and descriptor computation

/// Gradient fields of one image at the blur levels requested by descriptor
/// supports. Levels are built lazily, so instances are not thread-safe.
class DescriptorExtractor {
 public:
  explicit DescriptorExtractor(const ImageGrid& img) : img_(&img) {}

  const ImageGrid& image() const { return *img_; }

  /// Whether the square support of `frame` lies inside the span of pixel
  /// centers.
  bool support_inside(const FeatureFrame& frame) const {
    const double hx = 0.5 * (img_->extent_x() - img_->meters_per_px());
    const double hy = 0.5 * (img_->extent_y() - img_->meters_per_px());
    return frame.x - frame.sigma >= -hx - 1e-9 && frame.x + frame.sigma <= hx + 1e-9 &&
           frame.y - frame.sigma >= -hy - 1e-9 && frame.y + frame.sigma <= hy + 1e-9;
  }

  /// Dominant gradient orientation over the support (theta convention), or
  /// nullopt when the support carries no gradient energy.
  std::optional<double> dominant_orientation(const FeatureFrame& frame) {
    const Level& lv = level_for(frame.sigma);
    const Point2 center = level_coords(lv, frame);
    const double radius = frame.sigma / (img_->meters_per_px() * lv.factor);
    const double sigma_w = 0.25 * radius;
    const int reach = static_cast<int>(std::ceil(3.0 * sigma_w));
    constexpr int kBins = 36;
    std::array<double, kBins> hist{};
    double energy = 0.0;
    const int c0 = static_cast<int>(std::lround(center.x));
    const int r0 = static_cast<int>(std::lround(center.y));
    for (int r = r0 - reach; r <= r0 + reach; ++r) {
      if (r < 0 || r >= lv.grad.height) continue;
      for (int c = c0 - reach; c <= c0 + reach; ++c) {
        if (c < 0 || c >= lv.grad.width) continue;
        const double dx = c - center.x;
        const double dy = r - center.y;
        const double d2 = dx * dx + dy * dy;
        if (d2 > 9.0 * sigma_w * sigma_w) continue;
        const double m = lv.grad.mag(c, r);
        if (m <= 0.0) continue;
        const double w = m * std::exp(-0.5 * d2 / (sigma_w * sigma_w));
        const double a = normalize_angle(lv.grad.dir(c, r)) * kBins / kTwoPi;
        const int b0 = static_cast<int>(std::floor(a)) % kBins;
        const double f = a - std::floor(a);
        hist[b0] += w * (1.0 - f);
        hist[(b0 + 1) % kBins] += w * f;
        energy += w;
      }
    }
    if (!(energy > 1e-12)) return std::nullopt;
    for (int pass = 0; pass < 2; ++pass) {
      std::array<double, kBins> smoothed{};
      for (int i = 0; i < kBins; ++i) {
        smoothed[i] = 0.25 * hist[(i + kBins - 1) % kBins] + 0.5 * hist[i] + 0.25 * hist[(i + 1) % kBins];
      }
      hist = smoothed;
    }
    const int peak = static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
    const double left = hist[(peak + kBins - 1) % kBins];
    const double right = hist[(peak + 1) % kBins];
    const double denom = left - 2.0 * hist[peak] + right;
    const double offset = denom < 0.0 ? 0.5 * (left - right) / denom : 0.0;
    const double direction = (peak + offset) * kTwoPi / kBins;
    return normalize_angle(-direction);
  }

  /// 128-dim descriptor with the patch orientation fixed to `theta`. Returns
  /// the zero vector when the support has no gradient energy.
  Descriptor descriptor(const FeatureFrame& frame, double theta) {
    const Level& lv = level_for(frame.sigma);
    const Point2 center = level_coords(lv, frame);
    const double radius = frame.sigma / (img_->meters_per_px() * lv.factor);
    const double bin_w = 0.5 * radius;
    const double phi = -theta;
    const double cphi = std::cos(phi);
    const double sphi = std::sin(phi);
    const int reach = static_cast<int>(std::ceil(radius * std::numbers::sqrt2)) + 1;
    const int c0 = static_cast<int>(std::lround(center.x));
    const int r0 = static_cast<int>(std::lround(center.y));
    std::array<double, kDescriptorSize> h{};
    for (int r = r0 - reach; r <= r0 + reach; ++r) {
      if (r < 0 || r >= lv.grad.height) continue;
      for (int c = c0 - reach; c <= c0 + reach; ++c) {
        if (c < 0 || c >= lv.grad.width) continue;
        const double m = lv.grad.mag(c, r);
        if (m <= 0.0) continue;
        const double dx = c - center.x;
        const double dy = r - center.y;
        const double u = (cphi * dx + sphi * dy) / bin_w + 1.5;
        const double v = (-sphi * dx + cphi * dy) / bin_w + 1.5;
        if (u <= -1.0 || u >= 4.0 || v <= -1.0 || v >= 4.0) continue;
        const double w = m * std::exp(-0.5 * (dx * dx + dy * dy) / (radius * radius));
        const double o = normalize_angle(lv.grad.dir(c, r) - phi) * 8.0 / kTwoPi;
        const int u0 = static_cast<int>(std::floor(u));
        const int v0 = static_cast<int>(std::floor(v));
        const int o0 = static_cast<int>(std::floor(o));
        const double fu = u - u0;
        const double fv = v - v0;
        const double fo = o - o0;
        for (int dv = 0; dv < 2; ++dv) {
          const int vi = v0 + dv;
          if (vi < 0 || vi > 3) continue;
          const double wv = dv ? fv : 1.0 - fv;
          for (int du = 0; du < 2; ++du) {
            const int ui = u0 + du;
            if (ui < 0 || ui > 3) continue;
            const double wu = du ? fu : 1.0 - fu;
            for (int d_o = 0; d_o < 2; ++d_o) {
              const int oi = (o0 + d_o) % 8;
              const double wo = d_o ? fo : 1.0 - fo;
              h[(vi * 4 + ui) * 8 + oi] += w * wv * wu * wo;
            }
          }
        }
      }
    }
    return normalize_descriptor(h);
  }

 private:
  struct Level {
    int factor = 1;
    GradientField grad;
  };

  static Descriptor normalize_descriptor(std::array<double, kDescriptorSize>& h) {
    Descriptor out{};
    double norm = 0.0;
    for (double v : h) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 1e-12)) return out;
    double norm2 = 0.0;
    for (double& v : h) {
      v = std::min(v / norm, 0.2);
      norm2 += v * v;
    }
    norm2 = std::sqrt(norm2);
    for (std::size_t i = 0; i < kDescriptorSize; ++i) out[i] = static_cast<float>(h[i] / norm2);
    return out;
  }

  Point2 level_coords(const Level& lv, const FeatureFrame& frame) const {
    const Point2 px = img_->to_pixel(frame.position());
    return {px.x / lv.factor, px.y / lv.factor};
  }

  /// Level whose residual blur lies in [1.6, 3.2) pixels for a support radius
  /// of `sigma` meters; the gradient smoothing is radius / 6.
  const Level& level_for(double sigma) {
    const double blur = sigma / img_->meters_per_px() / 6.0;
    int factor = 1;
    while (blur / (2 * factor) >= 1.6 && img_->width() / (2 * factor) >= 8 && img_->height() / (2 * factor) >= 8) {
      factor *= 2;
    }
    const double level_blur = blur / factor;
    const auto key = std::make_pair(factor, static_cast<int>(std::lround(level_blur * 8.0)));
    auto it = levels_.find(key);
    if (it != levels_.end()) return it->second;
    auto base = bases_.find(factor);
    if (base == bases_.end()) {
      Plane p = to_plane(*img_);
      for (int f = 1; f < factor; f *= 2) p = downsample2(gaussian_blur(p, 1.0));
      base = bases_.emplace(factor, std::move(p)).first;
    }
    const double prior = factor == 1 ? 0.5 : 0.6;
    const double residual = std::sqrt(std::max(0.0, key.second * key.second / 64.0 - prior * prior));
    Level lv;
    lv.factor = factor;
    lv.grad = compute_gradients(gaussian_blur(base->second, residual));
    return levels_.emplace(key, std::move(lv)).first->second;
  }

  const ImageGrid* img_;
  std::map<int, Plane> bases_;
  std::map<std::pair<int, int>, Level> levels_;
};

// ---------------------------------------------------------------------------
// Dense sampling

/// Grid centers for dense sampling. Supports must fit between the first and
/// last pixel centers, which span extent - meters_per_px; this gives
/// floor((span - support) / step) + 1 positions per axis, centered.
inline std::vector<Point2> dense_grid_positions(double extent_x, double extent_y, double step, double support,
                                                double meters_per_px = 1.0) {
  std::vector<Point2> out;
  const double span_x = extent_x - meters_per_px;
  const double span_y = extent_y - meters_per_px;
  if (span_x < support || span_y < support) return out;
  const int nx = static_cast<int>(std::floor((span_x - support) / step + 1e-9)) + 1;
  const int ny = static_cast<int>(std::floor((span_y - support) / step + 1e-9)) + 1;
  const double x0 = -0.5 * (nx - 1) * step;
  const double y0 = -0.5 * (ny - 1) * step;
  out.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) out.push_back({x0 + i * step, y0 + j * step});
  }
  return out;
}

struct DenseSampleResult {
  std::vector<Feature> features;
  std::size_t grid_count = 0;  ///< grid positions before exclusion
  std::size_t excluded = 0;    ///< frames without gradient energy
  std::string warning;         ///< non-empty when sampling was not possible
};

inline DenseSampleResult dense_sample(const ImageGrid& img, double step, double support) {
  DenseSampleResult res;
  if (step < 1.0) throw Error("dense step must be at least 1 m");
  if (support < 8.0 * img.meters_per_px()) throw Error("dense support must cover at least 8 pixels");
  const std::vector<Point2> grid =
      dense_grid_positions(img.extent_x(), img.extent_y(), step, support, img.meters_per_px());
  if (grid.empty()) {
    res.warning = "image smaller than the dense support region";
    return res;
  }
  res.grid_count = grid.size();
  DescriptorExtractor ex(img);
  res.features.reserve(grid.size());
  for (const Point2& p : grid) {
    FeatureFrame frame{p.x, p.y, support / 2.0, 0.0};
    const std::optional<double> theta = ex.dominant_orientation(frame);
    if (!theta) {
      ++res.excluded;
      continue;
    }
    frame.theta = *theta;
    Feature f{frame, ex.descriptor(frame, *theta)};
    if (is_degenerate(f.descriptor)) {
      ++res.excluded;
      continue;
    }
    res.features.push_back(f);
  }
  return res;
}

/// Descriptor of `frame` with orientation forced to `forced_theta`.
inline Descriptor compute_descriptor_at(DescriptorExtractor& ex, const FeatureFrame& frame, double forced_theta) {
  if (!ex.support_inside(frame)) throw Error("descriptor support lies outside the image");
  return ex.descriptor(frame, normalize_angle(forced_theta));
}

inline Descriptor compute_descriptor_at(const ImageGrid& img, const FeatureFrame& frame, double forced_theta) {
  DescriptorExtractor ex(img);
  return compute_descriptor_at(ex, frame, forced_theta);
}

// ---------------------------------------------------------------------------
// Difference-of-Gaussians keypoints

struct DogConfig {
  int scales_per_octave = 3;
  double base_sigma = 1.6;
  double contrast_threshold = 0.015;
  double edge_ratio = 10.0;
  int border = 5;
};

inline std::vector<FeatureFrame> detect_dog_keypoints(const ImageGrid& img, const DogConfig& cfg = {}) {
  std::vector<FeatureFrame> out;
  const int S = cfg.scales_per_octave;
  const double k = std::pow(2.0, 1.0 / S);
  Plane base = gaussian_blur(to_plane(img), std::sqrt(cfg.base_sigma * cfg.base_sigma - 0.25));
  for (int octave = 0; std::min(base.width, base.height) >= 16 && octave < 8; ++octave) {
    std::vector<Plane> gauss{base};
    for (int i = 1; i < S + 3; ++i) {
      const double prev = cfg.base_sigma * std::pow(k, i - 1);
      const double cur = prev * k;
      gauss.push_back(gaussian_blur(gauss.back(), std::sqrt(cur * cur - prev * prev)));
    }
    std::vector<Plane> dog;
    for (int i = 0; i + 1 < static_cast<int>(gauss.size()); ++i) {
      Plane d(base.width, base.height);
      for (std::size_t j = 0; j < d.data.size(); ++j) d.data[j] = gauss[i + 1].data[j] - gauss[i].data[j];
      dog.push_back(std::move(d));
    }
    const int w = base.width;
    const int h = base.height;
    const double prefilter = 0.5 * cfg.contrast_threshold;
    std::vector<GradientField> grads(gauss.size());
    std::vector<bool> have_grad(gauss.size(), false);
    for (int s = 1; s <= S; ++s) {
      for (int r = cfg.border; r < h - cfg.border; ++r) {
        for (int c = cfg.border; c < w - cfg.border; ++c) {
          const float v = dog[s].at(c, r);
          if (std::abs(v) < prefilter) continue;
          bool is_max = true, is_min = true;
          for (int ds = -1; ds <= 1 && (is_max || is_min); ++ds) {
            for (int dr = -1; dr <= 1; ++dr) {
              for (int dc = -1; dc <= 1; ++dc) {
                if (!ds && !dr && !dc) continue;
                const float n = dog[s + ds].at(c + dc, r + dr);
                if (n >= v) is_max = false;
                if (n <= v) is_min = false;
              }
            }
          }
          if (!is_max && !is_min) continue;

          // Quadratic refinement in (c, r, s).
          int cc = c, rr = r, ss = s;
          Eigen::Vector3d offset = Eigen::Vector3d::Zero();
          double contrast = v;
          bool ok = false;
          for (int iter = 0; iter < 5; ++iter) {
            const Plane& d0 = dog[ss];
            const Plane& dm = dog[ss - 1];
            const Plane& dp = dog[ss + 1];
            Eigen::Vector3d g(0.5 * (d0.at(cc + 1, rr) - d0.at(cc - 1, rr)),
                              0.5 * (d0.at(cc, rr + 1) - d0.at(cc, rr - 1)),
                              0.5 * (dp.at(cc, rr) - dm.at(cc, rr)));
            const double v0 = d0.at(cc, rr);
            Eigen::Matrix3d H;
            H(0, 0) = d0.at(cc + 1, rr) + d0.at(cc - 1, rr) - 2 * v0;
            H(1, 1) = d0.at(cc, rr + 1) + d0.at(cc, rr - 1) - 2 * v0;
            H(2, 2) = dp.at(cc, rr) + dm.at(cc, rr) - 2 * v0;
            H(0, 1) = H(1, 0) = 0.25 * (d0.at(cc + 1, rr + 1) - d0.at(cc - 1, rr + 1) - d0.at(cc + 1, rr - 1) +
                                        d0.at(cc - 1, rr - 1));
            H(0, 2) = H(2, 0) = 0.25 * (dp.at(cc + 1, rr) - dp.at(cc - 1, rr) - dm.at(cc + 1, rr) + dm.at(cc - 1, rr));
            H(1, 2) = H(2, 1) = 0.25 * (dp.at(cc, rr + 1) - dp.at(cc, rr - 1) - dm.at(cc, rr + 1) + dm.at(cc, rr - 1));
            if (std::abs(H.determinant()) < 1e-15) break;
            offset = -H.inverse() * g;
            if (offset.cwiseAbs().maxCoeff() < 0.5) {
              contrast = v0 + 0.5 * g.dot(offset);
              ok = true;
              break;
            }
            cc += static_cast<int>(std::lround(offset.x()));
            rr += static_cast<int>(std::lround(offset.y()));
            ss += static_cast<int>(std::lround(offset.z()));
            if (ss < 1 || ss > S || cc < cfg.border || cc >= w - cfg.border || rr < cfg.border || rr >= h - cfg.border) {
              break;
            }
          }
          if (!ok || std::abs(contrast) < cfg.contrast_threshold) continue;

          // Edge response rejection on the 2x2 spatial Hessian.
          const Plane& d0 = dog[ss];
          const double v0 = d0.at(cc, rr);
          const double dxx = d0.at(cc + 1, rr) + d0.at(cc - 1, rr) - 2 * v0;
          const double dyy = d0.at(cc, rr + 1) + d0.at(cc, rr - 1) - 2 * v0;
          const double dxy = 0.25 * (d0.at(cc + 1, rr + 1) - d0.at(cc - 1, rr + 1) - d0.at(cc + 1, rr - 1) +
                                     d0.at(cc - 1, rr - 1));
          const double tr = dxx + dyy;
          const double det = dxx * dyy - dxy * dxy;
          const double er = cfg.edge_ratio;
          if (det <= 0.0 || tr * tr * er >= (er + 1) * (er + 1) * det) continue;

          const double scale_oct = cfg.base_sigma * std::pow(2.0, (ss + offset.z()) / S);
          const double factor = std::pow(2.0, octave);
          const double pc = (cc + offset.x()) * factor;
          const double pr = (rr + offset.y()) * factor;
          const Point2 metric = img.to_metric(pc, pr);

          // Dominant orientation on the Gaussian level of the keypoint.
          if (!have_grad[ss]) {
            grads[ss] = compute_gradients(gauss[ss]);
            have_grad[ss] = true;
          }
          const GradientField& gf = grads[ss];
          const double sw = 1.5 * scale_oct;
          const int reach = static_cast<int>(std::ceil(3.0 * sw));
          std::array<double, 36> hist{};
          for (int y = rr - reach; y <= rr + reach; ++y) {
            if (y < 0 || y >= h) continue;
            for (int x = cc - reach; x <= cc + reach; ++x) {
              if (x < 0 || x >= w) continue;
              const double d2 = (x - cc) * (x - cc) + (y - rr) * (y - rr);
              const double m = gf.mag(x, y) * std::exp(-0.5 * d2 / (sw * sw));
              const double a = normalize_angle(gf.dir(x, y)) * 36.0 / kTwoPi;
              hist[static_cast<int>(a) % 36] += m;
            }
          }
          for (int pass = 0; pass < 2; ++pass) {
            std::array<double, 36> sm{};
            for (int i = 0; i < 36; ++i) sm[i] = 0.25 * hist[(i + 35) % 36] + 0.5 * hist[i] + 0.25 * hist[(i + 1) % 36];
            hist = sm;
          }
          const int peak = static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
          const double l = hist[(peak + 35) % 36], rgt = hist[(peak + 1) % 36];
          const double den = l - 2 * hist[peak] + rgt;
          const double off = den < 0.0 ? 0.5 * (l - rgt) / den : 0.0;
          const double dir = (peak + 0.5 + off) * kTwoPi / 36.0;

          out.push_back({metric.x, metric.y, scale_oct * factor * img.meters_per_px(), normalize_angle(-dir)});
        }
      }
    }
    base = downsample2(gauss[S]);
  }
  std::sort(out.begin(), out.end(), [](const FeatureFrame& a, const FeatureFrame& b) {
    return std::tie(a.y, a.x, a.sigma) < std::tie(b.y, b.x, b.sigma);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Matching

namespace detail {

using DescriptorMatrix = Eigen::Matrix<float, Eigen::Dynamic, static_cast<int>(kDescriptorSize), Eigen::RowMajor>;

inline DescriptorMatrix to_matrix(std::span<const Feature> feats) {
  DescriptorMatrix m(static_cast<Eigen::Index>(feats.size()), static_cast<Eigen::Index>(kDescriptorSize));
  for (std::size_t i = 0; i < feats.size(); ++i) {
    for (std::size_t j = 0; j < kDescriptorSize; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = feats[i].descriptor[j];
  }
  return m;
}

/// Calls fn(i, j, approx_squared_distance) for every pair using blocked
/// single-precision products.
template <typename Fn>
void for_each_pair_distance(std::span<const Feature> a, std::span<const Feature> b, Fn&& fn) {
  const DescriptorMatrix ma = to_matrix(a);
  const DescriptorMatrix mb = to_matrix(b);
  const Eigen::VectorXf na = ma.rowwise().squaredNorm();
  const Eigen::VectorXf nb = mb.rowwise().squaredNorm();
  constexpr Eigen::Index kBlock = 256;
  Eigen::MatrixXf dots;
  for (Eigen::Index i0 = 0; i0 < ma.rows(); i0 += kBlock) {
    const Eigen::Index n = std::min(kBlock, ma.rows() - i0);
    dots.noalias() = ma.middleRows(i0, n) * mb.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < mb.rows(); ++j) {
        const float d2 = std::max(0.0f, na(i0 + i) + nb(j) - 2.0f * dots(i, j));
        fn(static_cast<std::uint32_t>(i0 + i), static_cast<std::uint32_t>(j), d2);
      }
    }
  }
}

inline Match make_match(std::span<const Feature> a, std::span<const Feature> b, std::uint32_t i, std::uint32_t j) {
  return {a[i].frame, b[j].frame, similarity_from_distance(descriptor_distance(a[i].descriptor, b[j].descriptor)), i, j};
}

inline bool match_order(const Match& x, const Match& y) {
  if (x.similarity != y.similarity) return x.similarity > y.similarity;
  return std::tie(x.index_a, x.index_b) < std::tie(y.index_a, y.index_b);
}

}  // namespace detail

/// The k most similar pairs over the full cross product, by descending
/// similarity with ties broken by (index_a, index_b).
inline MatchSet top_k_matches(std::span<const Feature> a, std::span<const Feature> b, std::size_t k) {
  if (a.empty() || b.empty()) throw Error("top_k_matches needs non-empty feature lists");
  if (k < 1) throw Error("top_k_matches needs k >= 1");
  const std::size_t total = a.size() * b.size();
  // Candidates are preselected on single-precision distances with some slack
  // and then re-ranked on exact distances.
  const std::size_t keep = std::min(total, k + k / 8 + 64);
  struct Cand {
    float d2;
    std::uint32_t i, j;
    bool operator<(const Cand& o) const { return std::tie(d2, i, j) < std::tie(o.d2, o.i, o.j); }
  };
  std::vector<Cand> heap;
  heap.reserve(keep + 1);
  detail::for_each_pair_distance(a, b, [&](std::uint32_t i, std::uint32_t j, float d2) {
    if (heap.size() < keep) {
      heap.push_back({d2, i, j});
      std::push_heap(heap.begin(), heap.end());
    } else if (Cand{d2, i, j} < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = {d2, i, j};
      std::push_heap(heap.begin(), heap.end());
    }
  });
  MatchSet out;
  out.matches.reserve(heap.size());
  for (const Cand& c : heap) out.matches.push_back(detail::make_match(a, b, c.i, c.j));
  std::sort(out.matches.begin(), out.matches.end(), detail::match_order);
  if (out.matches.size() > k) out.matches.resize(k);
  return out;
}

/// Nearest-neighbour matching accepted when d_nearest / d_second < tau.
inline std::vector<Match> distance_ratio_match(std::span<const Feature> a, std::span<const Feature> b, double tau) {
  if (b.size() < 2) throw Error("distance_ratio_match needs at least two candidate features");
  if (!(tau > 0.0 && tau <= 1.0)) throw Error("distance ratio must lie in (0, 1]");
  constexpr int kShortlist = 4;
  struct Slot {
    float d2;
    std::uint32_t j;
  };
  std::vector<std::array<Slot, kShortlist>> best(a.size());
  for (auto& s : best) s.fill({std::numeric_limits<float>::infinity(), 0});
  detail::for_each_pair_distance(a, b, [&](std::uint32_t i, std::uint32_t j, float d2) {
    auto& s = best[i];
    if (d2 >= s[kShortlist - 1].d2) return;
    int pos = kShortlist - 1;
    while (pos > 0 && s[pos - 1].d2 > d2) {
      s[pos] = s[pos - 1];
      --pos;
    }
    s[pos] = {d2, j};
  });
  std::vector<Match> out;
  for (std::uint32_t i = 0; i < a.size(); ++i) {
    std::array<std::pair<double, std::uint32_t>, kShortlist> exact;
    int n = 0;
    for (const Slot& s : best[i]) {
      if (std::isinf(s.d2)) continue;
      exact[n++] = {descriptor_distance(a[i].descriptor, b[s.j].descriptor), s.j};
    }
    std::sort(exact.begin(), exact.begin() + n);
    if (n < 2) continue;
    const double d1 = exact[0].first;
    const double d2 = exact[1].first;
    if (d1 < tau * d2) out.push_back(detail::make_match(a, b, i, exact[0].second));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature cache blob: "GRFT", u32 version, u64 count, then per feature
// 4 x f64 frame fields and 128 x f32 descriptor values (little endian).

inline constexpr std::uint32_t kFeatureBlobVersion = 1;

inline void write_features(const std::string& path, std::span<const Feature> feats) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  os.write("GRFT", 4);
  const std::uint32_t version = kFeatureBlobVersion;
  const std::uint64_t count = feats.size();
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  os.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const Feature& f : feats) {
    const double fr[4] = {f.frame.x, f.frame.y, f.frame.sigma, f.frame.theta};
    os.write(reinterpret_cast<const char*>(fr), sizeof fr);
    os.write(reinterpret_cast<const char*>(f.descriptor.data()), sizeof(float) * kDescriptorSize);
  }
  if (!os) throw Error("failed writing " + path);
}

inline std::vector<Feature> read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  is.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!is || std::string(magic, 4) != "GRFT") throw Error(path + ": not a feature blob");
  if (version != kFeatureBlobVersion) throw Error(path + ": unsupported feature blob version");
  std::vector<Feature> feats(count);
  for (Feature& f : feats) {
    double fr[4];
    is.read(reinterpret_cast<char*>(fr), sizeof fr);
    is.read(reinterpret_cast<char*>(f.descriptor.data()), sizeof(float) * kDescriptorSize);
    f.frame = {fr[0], fr[1], fr[2], fr[3]};
  }
  if (!is) throw Error(path + ": truncated feature blob");
  return feats;
}

}  // namespace groupreg
