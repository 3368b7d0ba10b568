#pragma once

// Sparse 3-D Hough voting space over rigid transforms (vx, vy, gamma).
//
// Votes are deposited at the nearest translation bin and split linearly
// between the two adjacent rotation bins. Translation smoothing is applied at
// query time with a truncated Gaussian kernel, which is equivalent to
// smoothing a dense accumulator and reading it back.

#include "groupreg/features.hpp"
#include "groupreg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace groupreg {

/// Raised when a space or estimator ends up without any mass.
class EmptyEstimatorError : public Error {
 public:
  using Error::Error;
};

/// Axis-aligned translation bounds in meters.
struct Extent {
  double min_x = -5000.0;
  double max_x = 5000.0;
  double min_y = -5000.0;
  double max_y = 5000.0;

  static Extent symmetric(double half) { return {-half, half, -half, half}; }
  bool contains(double x, double y) const { return x >= min_x && x <= max_x && y >= min_y && y <= max_y; }
  friend bool operator==(const Extent&, const Extent&) = default;
};

struct HoughParams {
  double trans_bin = 1.0;      ///< meters per translation bin
  int rot_bins = 18;           ///< rotation bins over [0, 2*pi)
  double sigma_t = 5.0;        ///< translation smoothing, meters
  double truncation = 3.0;     ///< kernel support in multiples of sigma_t
  double zoning_cell = 100.0;  ///< correspondence zoning cell, meters
  Extent extent;

  double rot_bin_width() const { return kTwoPi / rot_bins; }
  int ix_min() const { return static_cast<int>(std::ceil(extent.min_x / trans_bin - 1e-9)); }
  int ix_max() const { return static_cast<int>(std::floor(extent.max_x / trans_bin + 1e-9)); }
  int iy_min() const { return static_cast<int>(std::ceil(extent.min_y / trans_bin - 1e-9)); }
  int iy_max() const { return static_cast<int>(std::floor(extent.max_y / trans_bin + 1e-9)); }

  friend bool operator==(const HoughParams&, const HoughParams&) = default;
};

/// Separable translation kernel: a Gaussian shifted down by its value at the
/// truncation radius so that it reaches zero continuously, normalized to unit
/// sum over integer bin offsets.
class TranslationKernel {
 public:
  TranslationKernel() : TranslationKernel(HoughParams{}) {}
  explicit TranslationKernel(const HoughParams& p)
      : sigma_(p.sigma_t), bin_(p.trans_bin), support_(p.truncation * p.sigma_t),
        floor_(std::exp(-0.5 * p.truncation * p.truncation)) {
    if (!(sigma_ > 0.0) || !(bin_ > 0.0) || !(p.truncation > 0.0)) throw Error("invalid kernel parameters");
    radius_bins_ = static_cast<int>(std::floor(support_ / bin_ + 1e-9));
    double z = 0.0;
    for (int i = -radius_bins_; i <= radius_bins_; ++i) z += raw(i * bin_);
    norm_ = 1.0 / z;
    weights_.resize(2 * radius_bins_ + 1);
    for (int i = -radius_bins_; i <= radius_bins_; ++i) weights_[i + radius_bins_] = raw(i * bin_) * norm_;
  }

  /// 1-D weight at a continuous offset in meters.
  double operator()(double d) const {
    if (std::abs(d) >= support_) return 0.0;
    return raw(d) * norm_;
  }
  /// 1-D weight at an integer bin offset.
  double at_bin(int i) const {
    if (i < -radius_bins_ || i > radius_bins_) return 0.0;
    return weights_[i + radius_bins_];
  }
  int radius_bins() const { return radius_bins_; }
  double support() const { return support_; }

 private:
  double raw(double d) const {
    if (std::abs(d) >= support_) return 0.0;
    return std::max(0.0, std::exp(-0.5 * d * d / (sigma_ * sigma_)) - floor_);
  }

  double sigma_, bin_, support_, floor_;
  double norm_ = 1.0;
  int radius_bins_ = 0;
  std::vector<double> weights_;
};

/// Sparse 2-D field of masses on integer translation bins with kernel
/// lookups. Immutable after construction.
class SparsePlane {
 public:
  struct Cell {
    int ix = 0;
    int iy = 0;
    double mass = 0.0;
    friend bool operator==(const Cell&, const Cell&) = default;
  };
  struct Peak {
    double value = 0.0;
    int ix = 0;
    int iy = 0;
  };

  SparsePlane() = default;

  SparsePlane(const HoughParams& params, std::vector<Cell> cells) : params_(params), kernel_(params) {
    std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return std::tie(a.iy, a.ix) < std::tie(b.iy, b.ix); });
    for (const Cell& c : cells) {
      if (!(c.mass >= 0.0) || !std::isfinite(c.mass)) throw Error("Hough masses must be finite and non-negative");
      if (c.ix < params.ix_min() || c.ix > params.ix_max() || c.iy < params.iy_min() || c.iy > params.iy_max()) {
        throw Error("Hough cell outside the translation extent");
      }
      if (c.mass == 0.0) continue;
      if (!cells_.empty() && cells_.back().ix == c.ix && cells_.back().iy == c.iy) {
        cells_.back().mass += c.mass;
      } else {
        cells_.push_back(c);
      }
    }
    for (const Cell& c : cells_) total_ += c.mass;
    build_buckets();
  }

  const std::vector<Cell>& cells() const { return cells_; }
  double total_mass() const { return total_; }
  bool empty() const { return cells_.empty(); }

  /// Kernel-smoothed value at a continuous translation; 0 outside the extent.
  double lookup(double x, double y) const {
    if (cells_.empty() || !params_.extent.contains(x, y)) return 0.0;
    const double bin = params_.trans_bin;
    const double sup = kernel_.support();
    const int lo_x = std::max(params_.ix_min(), static_cast<int>(std::ceil((x - sup) / bin)));
    const int hi_x = std::min(params_.ix_max(), static_cast<int>(std::floor((x + sup) / bin)));
    const int lo_y = std::max(params_.iy_min(), static_cast<int>(std::ceil((y - sup) / bin)));
    const int hi_y = std::min(params_.iy_max(), static_cast<int>(std::floor((y + sup) / bin)));
    if (lo_x > hi_x || lo_y > hi_y) return 0.0;
    double acc = 0.0;
    for (int by = bucket_y(lo_y); by <= bucket_y(hi_y); ++by) {
      for (int bx = bucket_x(lo_x); bx <= bucket_x(hi_x); ++bx) {
        const auto [begin, end] = bucket_range(bx, by);
        for (std::uint32_t i = begin; i < end; ++i) {
          const Cell& c = cells_[order_[i]];
          const double wx = kernel_(x - c.ix * bin);
          if (wx == 0.0) continue;
          const double wy = kernel_(y - c.iy * bin);
          acc += c.mass * wx * wy;
        }
      }
    }
    return acc;
  }

  double smoothed_at(int ix, int iy) const {
    return lookup(ix * params_.trans_bin, iy * params_.trans_bin);
  }

  /// Maximum of the smoothed field over all integer bins inside the extent;
  /// ties resolve to the smallest (iy, ix).
  std::optional<Peak> smoothed_max() const {
    if (cells_.empty()) return std::nullopt;
    constexpr int kTile = 64;
    const int R = kernel_.radius_bins();
    std::vector<double> kw(2 * R + 1);
    for (int i = -R; i <= R; ++i) kw[i + R] = kernel_.at_bin(i);
    auto floor_div = [](int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
    std::unordered_map<std::int64_t, std::vector<double>> tiles;
    auto tile_key = [](int tx, int ty) { return (static_cast<std::int64_t>(ty) << 32) ^ static_cast<std::uint32_t>(tx); };
    const int xmin = params_.ix_min(), xmax = params_.ix_max();
    const int ymin = params_.iy_min(), ymax = params_.iy_max();
    for (const Cell& c : cells_) {
      const int x0 = std::max(xmin, c.ix - R), x1 = std::min(xmax, c.ix + R);
      const int y0 = std::max(ymin, c.iy - R), y1 = std::min(ymax, c.iy + R);
      for (int ty = floor_div(y0, kTile); ty <= floor_div(y1, kTile); ++ty) {
        for (int tx = floor_div(x0, kTile); tx <= floor_div(x1, kTile); ++tx) {
          auto& tile = tiles[tile_key(tx, ty)];
          if (tile.empty()) tile.assign(kTile * kTile, 0.0);
          const int ya = std::max(y0, ty * kTile), yb = std::min(y1, ty * kTile + kTile - 1);
          const int xa = std::max(x0, tx * kTile), xb = std::min(x1, tx * kTile + kTile - 1);
          for (int y = ya; y <= yb; ++y) {
            const double wy = c.mass * kw[y - c.iy + R];
            double* row = tile.data() + (y - ty * kTile) * kTile;
            for (int x = xa; x <= xb; ++x) row[x - tx * kTile] += wy * kw[x - c.ix + R];
          }
        }
      }
    }
    Peak best{-1.0, 0, 0};
    for (const auto& [key, tile] : tiles) {
      const int ty = static_cast<int>(key >> 32);
      const int tx = static_cast<int>(static_cast<std::int32_t>(static_cast<std::uint32_t>(key & 0xffffffff)));
      for (int j = 0; j < kTile; ++j) {
        for (int i = 0; i < kTile; ++i) {
          const double v = tile[j * kTile + i];
          const int ix = tx * kTile + i, iy = ty * kTile + j;
          if (v > best.value || (v == best.value && std::tie(iy, ix) < std::tie(best.iy, best.ix))) {
            best = {v, ix, iy};
          }
        }
      }
    }
    return best;
  }

  /// Weighted sum of planes sharing the same parameters.
  static SparsePlane blend(const HoughParams& params, const SparsePlane& a, double wa, const SparsePlane& b, double wb) {
    std::vector<Cell> cells;
    cells.reserve(a.cells_.size() + b.cells_.size());
    if (wa > 0.0) {
      for (Cell c : a.cells_) cells.push_back({c.ix, c.iy, c.mass * wa});
    }
    if (wb > 0.0) {
      for (Cell c : b.cells_) cells.push_back({c.ix, c.iy, c.mass * wb});
    }
    return SparsePlane(params, std::move(cells));
  }

  SparsePlane scaled(double factor) const {
    std::vector<Cell> cells = cells_;
    for (Cell& c : cells) c.mass *= factor;
    return SparsePlane(params_, std::move(cells));
  }

 private:
  static constexpr int kBucket = 32;

  int bucket_x(int ix) const { return (ix - params_.ix_min()) / kBucket; }
  int bucket_y(int iy) const { return (iy - params_.iy_min()) / kBucket; }
  std::int64_t bucket_key(int bx, int by) const { return static_cast<std::int64_t>(by) * 1000003LL + bx; }

  void build_buckets() {
    order_.resize(cells_.size());
    std::vector<std::int64_t> keys(cells_.size());
    for (std::uint32_t i = 0; i < cells_.size(); ++i) {
      order_[i] = i;
      keys[i] = bucket_key(bucket_x(cells_[i].ix), bucket_y(cells_[i].iy));
    }
    std::stable_sort(order_.begin(), order_.end(), [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });
    bucket_keys_.clear();
    bucket_starts_.clear();
    for (std::uint32_t i = 0; i < order_.size(); ++i) {
      const std::int64_t k = keys[order_[i]];
      if (bucket_keys_.empty() || bucket_keys_.back() != k) {
        bucket_keys_.push_back(k);
        bucket_starts_.push_back(i);
      }
    }
    bucket_starts_.push_back(static_cast<std::uint32_t>(order_.size()));
  }

  std::pair<std::uint32_t, std::uint32_t> bucket_range(int bx, int by) const {
    const std::int64_t k = bucket_key(bx, by);
    const auto it = std::lower_bound(bucket_keys_.begin(), bucket_keys_.end(), k);
    if (it == bucket_keys_.end() || *it != k) return {0, 0};
    const std::size_t idx = static_cast<std::size_t>(it - bucket_keys_.begin());
    return {bucket_starts_[idx], bucket_starts_[idx + 1]};
  }

  HoughParams params_;
  TranslationKernel kernel_;
  std::vector<Cell> cells_;
  double total_ = 0.0;
  std::vector<std::uint32_t> order_;
  std::vector<std::int64_t> bucket_keys_;
  std::vector<std::uint32_t> bucket_starts_;
};

/// One-dimensional rotation likelihood, linear between bin centers.
class RotationEstimator {
 public:
  RotationEstimator() = default;
  explicit RotationEstimator(std::vector<double> probs) : probs_(std::move(probs)) {}

  const std::vector<double>& probs() const { return probs_; }
  int bins() const { return static_cast<int>(probs_.size()); }
  double bin_width() const { return kTwoPi / bins(); }

  double lookup(double gamma) const {
    const double g = normalize_angle(gamma) / bin_width();
    const double fl = std::floor(g);
    const int i0 = static_cast<int>(fl) % bins();
    const double f = g - fl;
    return (1.0 - f) * probs_[i0] + f * probs_[(i0 + 1) % bins()];
  }

  int argmax_bin() const {
    return static_cast<int>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
  }
  double argmax_angle() const { return argmax_bin() * bin_width(); }
  double max_value() const { return probs_[argmax_bin()]; }

 private:
  std::vector<double> probs_;
};

/// Two-dimensional translation likelihood at a fixed rotation.
class TranslationEstimator {
 public:
  TranslationEstimator() = default;
  TranslationEstimator(const HoughParams& params, SparsePlane plane) : params_(params), plane_(std::move(plane)) {}

  double lookup(Point2 v) const { return plane_.lookup(v.x, v.y); }
  const SparsePlane& plane() const { return plane_; }
  double total_mass() const { return plane_.total_mass(); }

  struct Argmax {
    Point2 translation;
    double value = 0.0;
  };
  Argmax argmax() const {
    const auto peak = plane_.smoothed_max();
    if (!peak) throw EmptyEstimatorError("translation estimator is empty");
    return {{peak->ix * params_.trans_bin, peak->iy * params_.trans_bin}, peak->value};
  }

 private:
  HoughParams params_;
  SparsePlane plane_;
};

struct HoughEntry {
  int ix = 0;
  int iy = 0;
  int ig = 0;
  double mass = 0.0;
  friend bool operator==(const HoughEntry&, const HoughEntry&) = default;
};

class HoughSpace {
 public:
  HoughSpace() = default;

  /// Entries are taken as given (no renormalization); duplicates are merged.
  HoughSpace(const HoughParams& params, const std::vector<HoughEntry>& entries) : params_(params) {
    if (params.rot_bins < 1) throw Error("rot_bins must be positive");
    std::vector<std::vector<SparsePlane::Cell>> per_bin(params.rot_bins);
    for (const HoughEntry& e : entries) {
      if (e.ig < 0 || e.ig >= params.rot_bins) throw Error("rotation bin out of range");
      per_bin[e.ig].push_back({e.ix, e.iy, e.mass});
    }
    planes_.reserve(params.rot_bins);
    for (auto& cells : per_bin) {
      planes_.emplace_back(params, std::move(cells));
      total_ += planes_.back().total_mass();
    }
  }

  /// Same entries scaled to unit total mass.
  static HoughSpace normalized(const HoughParams& params, std::vector<HoughEntry> entries) {
    double total = 0.0;
    for (const HoughEntry& e : entries) total += e.mass;
    if (!(total > 0.0)) throw EmptyEstimatorError("Hough space has no mass");
    for (HoughEntry& e : entries) e.mass /= total;
    return HoughSpace(params, entries);
  }

  const HoughParams& params() const { return params_; }
  double total_mass() const { return total_; }

  std::size_t entry_count() const {
    std::size_t n = 0;
    for (const SparsePlane& p : planes_) n += p.cells().size();
    return n;
  }

  /// Entries in canonical (ig, iy, ix) order.
  std::vector<HoughEntry> entries() const {
    std::vector<HoughEntry> out;
    out.reserve(entry_count());
    for (int ig = 0; ig < static_cast<int>(planes_.size()); ++ig) {
      for (const auto& c : planes_[ig].cells()) out.push_back({c.ix, c.iy, ig, c.mass});
    }
    return out;
  }

  const SparsePlane& plane(int ig) const { return planes_.at(ig); }

  /// Probability of transform t: kernel-smoothed in translation, linear
  /// between the two adjacent rotation bins.
  double lookup(const RigidTransform& t) const {
    if (planes_.empty()) return 0.0;
    if (!params_.extent.contains(t.vx(), t.vy())) return 0.0;
    const auto [i0, i1, f] = rotation_split(t.gamma());
    double acc = 0.0;
    if (f < 1.0) acc += (1.0 - f) * planes_[i0].lookup(t.vx(), t.vy());
    if (f > 0.0) acc += f * planes_[i1].lookup(t.vx(), t.vy());
    return acc;
  }

  double smoothed_at(int ix, int iy, int ig) const { return planes_.at(ig).smoothed_at(ix, iy); }

  RotationEstimator rotation_estimator() const {
    std::vector<double> probs(params_.rot_bins, 0.0);
    double total = 0.0;
    for (int ig = 0; ig < params_.rot_bins; ++ig) {
      if (const auto peak = planes_[ig].smoothed_max()) probs[ig] = peak->value;
      total += probs[ig];
    }
    if (!(total > 0.0)) throw EmptyEstimatorError("rotation estimator is empty");
    for (double& p : probs) p /= total;
    return RotationEstimator(std::move(probs));
  }

  /// Rotation-interpolated slice at gamma, renormalized to unit mass.
  TranslationEstimator translation_estimator(double gamma) const {
    const auto [i0, i1, f] = rotation_split(gamma);
    SparsePlane slice = SparsePlane::blend(params_, planes_[i0], 1.0 - f, planes_[i1], f);
    if (!(slice.total_mass() > 0.0)) throw EmptyEstimatorError("translation slice has no mass");
    return TranslationEstimator(params_, slice.scaled(1.0 / slice.total_mass()));
  }

  struct Argmax {
    RigidTransform transform;
    double value = 0.0;
  };

  /// Maximum of the smoothed space over integer translation bins and
  /// rotation bin centers.
  Argmax argmax() const {
    Argmax best{{}, -1.0};
    for (int ig = 0; ig < params_.rot_bins; ++ig) {
      const auto peak = planes_[ig].smoothed_max();
      if (peak && peak->value > best.value) {
        best = {{peak->ix * params_.trans_bin, peak->iy * params_.trans_bin, ig * params_.rot_bin_width()}, peak->value};
      }
    }
    if (best.value < 0.0) throw EmptyEstimatorError("Hough space is empty");
    return best;
  }

 private:
  std::tuple<int, int, double> rotation_split(double gamma) const {
    const double g = normalize_angle(gamma) / params_.rot_bin_width();
    const double fl = std::floor(g);
    const int i0 = static_cast<int>(fl) % params_.rot_bins;
    return {i0, (i0 + 1) % params_.rot_bins, g - fl};
  }

  HoughParams params_;
  std::vector<SparsePlane> planes_;
  double total_ = 0.0;
};

/// Rigid transform voted by a match: gamma = theta_a - theta_b and
/// v = p_b - R(gamma) p_a.
inline RigidTransform vote_from_match(const Match& m) {
  const double gamma = normalize_angle(m.frame_a.theta - m.frame_b.theta);
  const Point2 v = m.frame_b.position() - rotate(gamma, m.frame_a.position());
  return {v.x, v.y, gamma};
}

/// Zone-filtered, normalized voting space from a match set. Only the most
/// similar match per (zone of a, zone of b) pair votes.
inline HoughSpace build_hough_space(const MatchSet& matches, const HoughParams& params) {
  if (matches.empty()) throw Error("cannot build a Hough space from an empty match set");
  const double cell = params.zoning_cell;
  auto zone = [cell](double v) { return static_cast<std::int64_t>(std::floor(v / cell)); };
  using ZoneKey = std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t>;
  std::map<ZoneKey, std::size_t> strongest;
  for (std::size_t i = 0; i < matches.matches.size(); ++i) {
    const Match& m = matches.matches[i];
    const ZoneKey key{zone(m.frame_a.x), zone(m.frame_a.y), zone(m.frame_b.x), zone(m.frame_b.y)};
    auto [it, inserted] = strongest.try_emplace(key, i);
    if (!inserted && m.similarity > matches.matches[it->second].similarity) it->second = i;
  }
  std::vector<std::size_t> voters;
  voters.reserve(strongest.size());
  for (const auto& [key, idx] : strongest) voters.push_back(idx);
  std::sort(voters.begin(), voters.end());

  std::map<std::tuple<int, int, int>, double> acc;
  const double width = params.rot_bin_width();
  for (std::size_t idx : voters) {
    const Match& m = matches.matches[idx];
    const RigidTransform t = vote_from_match(m);
    const double fx = std::round(t.vx() / params.trans_bin);
    const double fy = std::round(t.vy() / params.trans_bin);
    if (fx < params.ix_min() || fx > params.ix_max() || fy < params.iy_min() || fy > params.iy_max()) continue;
    const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
    const double g = t.gamma() / width;
    const double fl = std::floor(g);
    const int i0 = static_cast<int>(fl) % params.rot_bins;
    const double f = g - fl;
    if (f < 1.0) acc[{i0, iy, ix}] += m.similarity * (1.0 - f);
    if (f > 0.0) acc[{(i0 + 1) % params.rot_bins, iy, ix}] += m.similarity * f;
  }
  std::vector<HoughEntry> entries;
  entries.reserve(acc.size());
  for (const auto& [key, mass] : acc) {
    if (mass > 0.0) entries.push_back({std::get<2>(key), std::get<1>(key), std::get<0>(key), mass});
  }
  if (entries.empty()) throw EmptyEstimatorError("all votes fell outside the translation extent");
  return HoughSpace::normalized(params, std::move(entries));
}

// ---------------------------------------------------------------------------
// Cache file: "GRHS", u32 version, f64 trans_bin, u32 rot_bins, f64 sigma_t,
// f64 truncation, f64 zoning_cell, 4 x f64 extent, u64 count, then
// (i32 ix, i32 iy, i32 ig, f64 mass) records in canonical order.

inline constexpr std::uint32_t kHoughFileVersion = 1;

namespace detail {
template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
}  // namespace detail

inline void write_hough_space(const std::string& path, const HoughSpace& h) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  const HoughParams& p = h.params();
  os.write("GRHS", 4);
  detail::put<std::uint32_t>(os, kHoughFileVersion);
  detail::put<double>(os, p.trans_bin);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.rot_bins));
  detail::put<double>(os, p.sigma_t);
  detail::put<double>(os, p.truncation);
  detail::put<double>(os, p.zoning_cell);
  detail::put<double>(os, p.extent.min_x);
  detail::put<double>(os, p.extent.max_x);
  detail::put<double>(os, p.extent.min_y);
  detail::put<double>(os, p.extent.max_y);
  const std::vector<HoughEntry> entries = h.entries();
  detail::put<std::uint64_t>(os, entries.size());
  for (const HoughEntry& e : entries) {
    detail::put<std::int32_t>(os, e.ix);
    detail::put<std::int32_t>(os, e.iy);
    detail::put<std::int32_t>(os, e.ig);
    detail::put<double>(os, e.mass);
  }
  if (!os) throw Error("failed writing " + path);
}

inline HoughSpace read_hough_space(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "GRHS") throw Error(path + ": not a Hough space file");
  if (detail::get<std::uint32_t>(is) != kHoughFileVersion) throw Error(path + ": unsupported Hough file version");
  HoughParams p;
  p.trans_bin = detail::get<double>(is);
  p.rot_bins = static_cast<int>(detail::get<std::uint32_t>(is));
  p.sigma_t = detail::get<double>(is);
  p.truncation = detail::get<double>(is);
  p.zoning_cell = detail::get<double>(is);
  p.extent.min_x = detail::get<double>(is);
  p.extent.max_x = detail::get<double>(is);
  p.extent.min_y = detail::get<double>(is);
  p.extent.max_y = detail::get<double>(is);
  const auto count = detail::get<std::uint64_t>(is);
  if (!is) throw Error(path + ": truncated Hough header");
  std::vector<HoughEntry> entries(count);
  for (HoughEntry& e : entries) {
    e.ix = detail::get<std::int32_t>(is);
    e.iy = detail::get<std::int32_t>(is);
    e.ig = detail::get<std::int32_t>(is);
    e.mass = detail::get<double>(is);
  }
  if (!is) throw Error(path + ": truncated Hough entries");
  return HoughSpace(p, entries);
}

}  // namespace groupreg
