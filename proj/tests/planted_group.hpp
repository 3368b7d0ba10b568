#pragma once

#include "groupreg/groupwise.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace groupreg::testing {

/// 16 x 16 translation bins of 4 m, 18 rotation bins.
inline HoughParams lattice_params() {
  HoughParams p;
  p.trans_bin = 4.0;
  p.extent = {-32, 28, -32, 28};
  p.zoning_cell = 8;
  return p;
}

struct PlantedGroup {
  ImageGroup group;
  std::vector<RigidTransform> truth;
};

inline HoughEntry nearest_entry(const HoughParams& p, const RigidTransform& t, double mass) {
  const int ig = static_cast<int>(std::lround(t.gamma() / p.rot_bin_width())) % p.rot_bins;
  return {static_cast<int>(std::lround(t.vx() / p.trans_bin)), static_cast<int>(std::lround(t.vy() / p.trans_bin)), ig,
          mass};
}

/// Peaked spaces at the planted relations plus uniform clutter. Planted
/// rotations are multiples of the rotation bin width and translations stay
/// within +-9 m so every composed relation lies inside the extent.
inline PlantedGroup make_planted_group(int n, std::uint64_t seed, int clutter = 40) {
  const HoughParams p = lattice_params();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ut(-9.0, 9.0), um(0.01, 0.08);
  std::uniform_int_distribution<int> ug(0, p.rot_bins - 1), ux(p.ix_min(), p.ix_max()), uy(p.iy_min(), p.iy_max());
  PlantedGroup out;
  out.group.params = p;
  for (int k = 0; k < n; ++k) {
    out.group.historical.push_back("h" + std::to_string(k));
    out.truth.emplace_back(ut(rng), ut(rng), ug(rng) * p.rot_bin_width());
  }
  auto make_space = [&](const RigidTransform& rel) {
    std::vector<HoughEntry> e{nearest_entry(p, rel, 1.0)};
    for (int i = 0; i < clutter; ++i) e.push_back({ux(rng), uy(rng), ug(rng), um(rng)});
    return HoughSpace::normalized(p, e);
  };
  for (int k = 0; k < n; ++k) {
    out.group.spaces[{k, kReference}] = make_space(out.truth[k]);
    for (int l = 0; l < n; ++l) {
      if (k != l) out.group.spaces[{k, l}] = make_space(compose_via_reference(out.truth[k], out.truth[l]));
    }
  }
  return out;
}

/// Exact maximum of the full fitness over transforms restricted to the
/// space lattice (translation bin centers x rotation bin centers), found by
/// depth-first branch and bound.
class LatticeOracle {
 public:
  LatticeOracle(const ImageGroup& g, const RelationMask& mask) : g_(&g), mask_(mask), n_(g.size()) {
    const HoughParams& p = g.params;
    for (int ig = 0; ig < p.rot_bins; ++ig) {
      for (int iy = p.iy_min(); iy <= p.iy_max(); ++iy) {
        for (int ix = p.ix_min(); ix <= p.ix_max(); ++ix) {
          lattice_.emplace_back(ix * p.trans_bin, iy * p.trans_bin, ig * p.rot_bin_width());
        }
      }
    }
    direct_.resize(n_);
    direct_max_.resize(n_);
    order_.resize(n_);
    for (int k = 0; k < n_; ++k) {
      for (const RigidTransform& t : lattice_) direct_[k].push_back(g.space(k, kReference).lookup(t));
      direct_max_[k] = *std::max_element(direct_[k].begin(), direct_[k].end());
      order_[k].resize(lattice_.size());
      for (std::size_t i = 0; i < lattice_.size(); ++i) order_[k][i] = i;
      std::stable_sort(order_[k].begin(), order_[k].end(),
                       [&](std::size_t a, std::size_t b) { return direct_[k][a] > direct_[k][b]; });
    }
    pair_bound_.assign(n_, std::vector<double>(n_, 0.0));
    for (int k = 0; k < n_; ++k) {
      for (int l = 0; l < n_; ++l) {
        if (mask(k, l)) pair_bound_[k][l] = sup_bound(g.space(k, l));
      }
    }
  }

  /// Searches for values strictly above `lower_bound`; returns the maximum
  /// found (or `lower_bound` when nothing exceeds it).
  double maximum(double lower_bound) {
    best_ = lower_bound;
    std::vector<std::size_t> pick(n_);
    recurse(0, 0.0, pick);
    return best_;
  }
  const std::vector<RigidTransform>& argmax() const { return best_t_; }
  std::size_t nodes() const { return nodes_; }

  /// Upper bound of a space over all continuous transforms: the kernel
  /// support covers at most 8 bins per axis, so the smoothed value never
  /// exceeds the center weight squared times the heaviest 8x8 window.
  static double sup_bound(const HoughSpace& h) {
    const HoughParams& p = h.params();
    const TranslationKernel kern(p);
    const int w = static_cast<int>(std::ceil(2.0 * kern.support() / p.trans_bin));
    double best = 0.0;
    for (int ig = 0; ig < p.rot_bins; ++ig) {
      const auto& cells = h.plane(ig).cells();
      for (const auto& anchor : cells) {
        for (int ox = 0; ox < w; ++ox) {
          for (int oy = 0; oy < w; ++oy) {
            const int x0 = anchor.ix - ox, y0 = anchor.iy - oy;
            double m = 0.0;
            for (const auto& c : cells) {
              if (c.ix >= x0 && c.ix < x0 + w && c.iy >= y0 && c.iy < y0 + w) m += c.mass;
            }
            best = std::max(best, m);
          }
        }
      }
    }
    return best * kern(0.0) * kern(0.0);
  }

 private:
  double remaining(int k) const {
    double r = 0.0;
    for (int j = k; j < n_; ++j) r += direct_max_[j];
    for (int a = 0; a < n_; ++a) {
      for (int b = 0; b < n_; ++b) {
        if (a != b && std::max(a, b) >= k) r += pair_bound_[a][b];
      }
    }
    return r;
  }

  void recurse(int k, double partial, std::vector<std::size_t>& pick) {
    ++nodes_;
    if (k == n_) {
      if (partial > best_) {
        best_ = partial;
        best_t_.clear();
        for (std::size_t i : pick) best_t_.push_back(lattice_[i]);
      }
      return;
    }
    const double rest_here = remaining(k) - direct_max_[k];
    const double rest_after = remaining(k + 1);
    for (std::size_t i : order_[k]) {
      if (partial + direct_[k][i] + rest_here <= best_) break;
      double add = direct_[k][i];
      for (int j = 0; j < k; ++j) {
        if (mask_(k, j)) add += g_->space(k, j).lookup(compose_via_reference(lattice_[i], lattice_[pick[j]]));
        if (mask_(j, k)) add += g_->space(j, k).lookup(compose_via_reference(lattice_[pick[j]], lattice_[i]));
      }
      if (partial + add + rest_after <= best_) continue;
      pick[k] = i;
      recurse(k + 1, partial + add, pick);
    }
  }

  const ImageGroup* g_;
  RelationMask mask_;
  int n_;
  std::vector<RigidTransform> lattice_;
  std::vector<std::vector<double>> direct_;
  std::vector<double> direct_max_;
  std::vector<std::vector<double>> pair_bound_;
  std::vector<std::vector<std::size_t>> order_;
  double best_ = 0.0;
  std::vector<RigidTransform> best_t_;
  std::size_t nodes_ = 0;
};

}  // namespace groupreg::testing
