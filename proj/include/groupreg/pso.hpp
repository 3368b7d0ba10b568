#pragma once

// Global-best particle swarm minimizer with periodic dimensions.

#include "groupreg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <thread>
#include <vector>

namespace groupreg {

struct PsoConfig {
  int particle_count = 150;
  int max_iters = 300;
  double inertia = 0.7298;
  double cognitive = 1.4962;
  double social = 1.4962;
  int stall_iters = 40;
  double stall_tolerance = 1e-6;
  std::uint64_t rng_seed = 1;
  int threads = 1;  ///< objective evaluation workers
};

struct Bound {
  double lo = 0.0;
  double hi = 1.0;
  bool periodic = false;  ///< wrap into [lo, hi) instead of clamping
};

struct PsoResult {
  std::vector<double> position;
  double value = 0.0;
  int iterations = 0;
  std::size_t evaluations = 0;
};

using Objective = std::function<double(const std::vector<double>&)>;

namespace detail {

inline double wrap_into(double x, const Bound& b) {
  if (!b.periodic) return std::clamp(x, b.lo, b.hi);
  const double w = b.hi - b.lo;
  double r = std::fmod(x - b.lo, w);
  if (r < 0.0) r += w;
  if (r >= w) r = 0.0;
  return b.lo + r;
}

/// Evaluates f on every position; results land in fixed slots so the outcome
/// does not depend on the number of workers.
inline void evaluate_all(const Objective& f, const std::vector<std::vector<double>>& xs, std::vector<double>& out,
                         int threads) {
  out.resize(xs.size());
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(xs.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = static_cast<std::size_t>(w); i < xs.size(); i += static_cast<std::size_t>(workers)) {
        out[i] = f(xs[i]);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

/// Minimizes `f`. Velocities start at zero. Missing initial particles are
/// drawn uniformly within the bounds; extras beyond particle_count are
/// ignored.
inline PsoResult pso_minimize(const Objective& f, const std::vector<Bound>& bounds,
                              std::vector<std::vector<double>> init, const PsoConfig& cfg) {
  if (cfg.particle_count < 1) throw Error("PSO needs at least one particle");
  if (!(cfg.inertia > 0.0 && cfg.cognitive > 0.0 && cfg.social > 0.0)) throw Error("PSO coefficients must be positive");
  const std::size_t dim = bounds.size();
  for (const Bound& b : bounds) {
    if (!(b.hi > b.lo) || !std::isfinite(b.lo) || !std::isfinite(b.hi)) throw Error("PSO bounds must be finite and ordered");
  }
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t n = static_cast<std::size_t>(cfg.particle_count);
  init.resize(std::min(init.size(), n));
  std::vector<std::vector<double>> x(n, std::vector<double>(dim)), v(n, std::vector<double>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const Bound& b = bounds[d];
      if (i < init.size()) {
        if (init[i].size() != dim) throw Error("initial particle has the wrong dimension");
        x[i][d] = detail::wrap_into(init[i][d], b);
      } else {
        x[i][d] = b.lo + unit(rng) * (b.hi - b.lo);
      }
    }
  }

  PsoResult res;
  std::vector<double> fx;
  detail::evaluate_all(f, x, fx, cfg.threads);
  res.evaluations += n;
  std::vector<std::vector<double>> pbest = x;
  std::vector<double> pval = fx;
  std::size_t g = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (pval[i] < pval[g]) g = i;
  }
  std::vector<double> gbest = pbest[g];
  double gval = pval[g];
  std::vector<double> history{gval};

  for (int it = 0; it < cfg.max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        const Bound& b = bounds[d];
        const double span = b.hi - b.lo;
        double to_p = pbest[i][d] - x[i][d];
        double to_g = gbest[d] - x[i][d];
        if (b.periodic) {
          to_p = std::remainder(to_p, span);
          to_g = std::remainder(to_g, span);
        }
        const double r1 = unit(rng), r2 = unit(rng);
        double vel = cfg.inertia * v[i][d] + cfg.cognitive * r1 * to_p + cfg.social * r2 * to_g;
        vel = std::clamp(vel, -0.5 * span, 0.5 * span);
        v[i][d] = vel;
        const double moved = x[i][d] + vel;
        if (!b.periodic && (moved < b.lo || moved > b.hi)) v[i][d] = 0.0;
        x[i][d] = detail::wrap_into(moved, b);
      }
    }
    detail::evaluate_all(f, x, fx, cfg.threads);
    res.evaluations += n;
    for (std::size_t i = 0; i < n; ++i) {
      if (fx[i] < pval[i]) {
        pval[i] = fx[i];
        pbest[i] = x[i];
      }
      if (fx[i] < gval) {
        gval = fx[i];
        gbest = x[i];
      }
    }
    history.push_back(gval);
    res.iterations = it + 1;
    if (cfg.stall_iters > 0 && static_cast<int>(history.size()) > cfg.stall_iters) {
      const double past = history[history.size() - 1 - static_cast<std::size_t>(cfg.stall_iters)];
      if (std::abs(past - gval) <= cfg.stall_tolerance * std::max(std::abs(gval), 1e-300)) break;
    }
  }
  res.position = gbest;
  res.value = gval;
  return res;
}

}  // namespace groupreg
