#pragma once

// Groupwise likelihood over a set of historical images and one reference,
// with the sequential (rotations, translations, reference, refinement)
// solver and a direct whole-vector PSO baseline.
//
// Historical images are indexed 0..N-1; image 0 plays the role of the
// intermediate frame during the first two stages. The reference is
// kReference. Spaces are keyed by ordered pairs (k, l) and estimate the
// transform mapping image k coordinates into image l coordinates.

#include "groupreg/graph.hpp"
#include "groupreg/hough.hpp"
#include "groupreg/pso.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace groupreg {

inline constexpr int kReference = -1;

struct ImageGroup {
  std::string reference = "reference";
  std::vector<std::string> historical;
  HoughParams params;
  std::map<std::pair<int, int>, HoughSpace> spaces;

  int size() const { return static_cast<int>(historical.size()); }
  bool has_space(int k, int l) const { return spaces.count({k, l}) > 0; }
  const HoughSpace& space(int k, int l) const {
    const auto it = spaces.find({k, l});
    if (it == spaces.end()) {
      throw Error("missing Hough space for pair (" + std::to_string(k) + ", " + std::to_string(l) + ")");
    }
    return it->second;
  }
};

/// Symmetric 0/1 selection of historical-to-historical relations.
class RelationMask {
 public:
  RelationMask() = default;
  explicit RelationMask(int n, bool value = true) : n_(n), w_(static_cast<std::size_t>(n) * n, value ? 1 : 0) {
    for (int k = 0; k < n; ++k) w_[static_cast<std::size_t>(k) * n + k] = 0;
  }
  static RelationMask all_ones(int n) { return RelationMask(n, true); }
  static RelationMask zeros(int n) { return RelationMask(n, false); }

  int size() const { return n_; }
  bool operator()(int k, int l) const { return w_[static_cast<std::size_t>(k) * n_ + l] != 0; }
  void set(int k, int l, bool value) {
    if (k == l) return;
    w_[static_cast<std::size_t>(k) * n_ + l] = value;
    w_[static_cast<std::size_t>(l) * n_ + k] = value;
  }

 private:
  int n_ = 0;
  std::vector<std::uint8_t> w_;
};

/// Mask selecting every historical pair whose spaces exist in both
/// directions.
inline RelationMask available_relations(const ImageGroup& g) {
  RelationMask m(g.size(), false);
  for (int k = 0; k < g.size(); ++k) {
    for (int l = k + 1; l < g.size(); ++l) m.set(k, l, g.has_space(k, l) && g.has_space(l, k));
  }
  return m;
}

struct StageRecord {
  std::string name;
  double fitness = 0.0;
  double seconds = 0.0;
};

struct GroupSolution {
  std::vector<RigidTransform> transforms;  ///< historical k -> reference
  double fitness = 0.0;
  std::vector<StageRecord> stage_trace;
};

// ---------------------------------------------------------------------------
// Fitness functions

namespace detail {
inline void check_mask(const ImageGroup& g, const RelationMask& mask) {
  if (mask.size() != g.size()) throw Error("relation mask does not match the group size");
}
}  // namespace detail

/// Direct terms plus masked indirect terms summed over ordered pairs.
class FullFitness {
 public:
  FullFitness(const ImageGroup& group, const RelationMask& mask) : group_(&group), mask_(mask) {
    detail::check_mask(group, mask);
    for (int k = 0; k < group.size(); ++k) {
      direct_.push_back(&group.space(k, kReference));
      for (int l = 0; l < group.size(); ++l) {
        if (mask(k, l)) pairs_.push_back({k, l, &group.space(k, l)});
      }
    }
  }

  double direct(const std::vector<RigidTransform>& t) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < direct_.size(); ++k) acc += direct_[k]->lookup(t[k]);
    return acc;
  }

  double indirect(const std::vector<RigidTransform>& t) const {
    double acc = 0.0;
    for (const Pair& p : pairs_) acc += p.space->lookup(compose_via_reference(t[p.k], t[p.l]));
    return acc;
  }

  double operator()(const std::vector<RigidTransform>& t) const {
    if (static_cast<int>(t.size()) != group_->size()) throw Error("transform count does not match the group size");
    return direct(t) + indirect(t);
  }

 private:
  struct Pair {
    int k, l;
    const HoughSpace* space;
  };
  const ImageGroup* group_;
  RelationMask mask_;
  std::vector<const HoughSpace*> direct_;
  std::vector<Pair> pairs_;
};

inline double fitness_full(const ImageGroup& group, const RelationMask& mask, const std::vector<RigidTransform>& t) {
  return FullFitness(group, mask)(t);
}

/// Rotation-only fitness over R_1..R_{N-1} (R_0 = 0): direct terms against
/// image 0 (always present) and masked indirect terms among images 1..N-1.
class RotationFitness {
 public:
  RotationFitness(const ImageGroup& group, const RelationMask& mask) : n_(group.size()) {
    detail::check_mask(group, mask);
    for (int k = 1; k < n_; ++k) {
      direct_.push_back({k, 0, group.space(k, 0).rotation_estimator()});
      for (int l = 1; l < n_; ++l) {
        if (mask(k, l)) indirect_.push_back({k, l, group.space(k, l).rotation_estimator()});
      }
    }
  }

  /// `r` holds N-1 rotations for images 1..N-1.
  double operator()(const std::vector<double>& r) const { return direct(r) + indirect(r); }

  double direct(const std::vector<double>& r) const {
    double acc = 0.0;
    for (const Term& t : direct_) acc += t.est.lookup(r[t.k - 1]);
    return acc;
  }
  double indirect(const std::vector<double>& r) const {
    double acc = 0.0;
    for (const Term& t : indirect_) acc += t.est.lookup(r[t.k - 1] - r[t.l - 1]);
    return acc;
  }

 private:
  struct Term {
    int k, l;
    RotationEstimator est;
  };
  int n_;
  std::vector<Term> direct_, indirect_;
};

inline double fitness_rotation(const ImageGroup& group, const RelationMask& mask, const std::vector<double>& rotations) {
  return RotationFitness(group, mask)(rotations);
}

/// Translation-only fitness with rotations fixed; translations V_1..V_{N-1}
/// map images 1..N-1 into image 0 together with the fixed rotations.
class TranslationFitness {
 public:
  TranslationFitness(const ImageGroup& group, const RelationMask& mask, std::vector<double> rotations)
      : rot_(std::move(rotations)) {
    detail::check_mask(group, mask);
    const int n = group.size();
    if (static_cast<int>(rot_.size()) != n - 1) throw Error("rotation count does not match the group size");
    for (int k = 1; k < n; ++k) {
      direct_.push_back({k, 0, group.space(k, 0).translation_estimator(rot_[k - 1])});
      for (int l = 1; l < n; ++l) {
        if (mask(k, l)) indirect_.push_back({k, l, group.space(k, l).translation_estimator(rot_[k - 1] - rot_[l - 1])});
      }
    }
  }

  RigidTransform relation(const std::vector<Point2>& v, int k) const {
    return {v[k - 1].x, v[k - 1].y, rot_[k - 1]};
  }

  double operator()(const std::vector<Point2>& v) const {
    double acc = 0.0;
    for (const Term& t : direct_) acc += t.est.lookup(v[t.k - 1]);
    for (const Term& t : indirect_) {
      acc += t.est.lookup(compose_via_reference(relation(v, t.k), relation(v, t.l)).translation());
    }
    return acc;
  }

 private:
  struct Term {
    int k, l;
    TranslationEstimator est;
  };
  std::vector<double> rot_;
  std::vector<Term> direct_, indirect_;
};

inline double fitness_translation(const ImageGroup& group, const RelationMask& mask, const std::vector<double>& rotations,
                                  const std::vector<Point2>& translations) {
  return TranslationFitness(group, mask, rotations)(translations);
}

// ---------------------------------------------------------------------------
// Greedy initialization

struct GreedyInit {
  RigidTransform value;  ///< concatenated relation from the image to the root
  double confidence = 0.0;
  GraphPath path;
};

/// Concatenates `relation(a, b)` (a -> b) along each greedy path to `root`.
template <typename RelationFn>
std::map<int, GreedyInit> greedy_init(const RelationGraph& graph, int root, RelationFn&& relation) {
  std::map<int, GreedyInit> out;
  for (auto& [node, path] : greedy_paths(graph, root)) {
    RigidTransform acc;
    for (std::size_t i = 0; i + 1 < path.nodes.size(); ++i) {
      acc = compose_rigid(relation(path.nodes[i], path.nodes[i + 1]), acc);
    }
    out[node] = {acc, path.confidence, path};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Solvers

struct SolverConfig {
  PsoConfig pso;                         ///< particle_count used by the rotation and translation stages
  double randomize_fraction = 0.3;       ///< lowest-confidence share of rotation dims randomized
  double translation_jitter = 3.0;       ///< meters
  int reference_particles = 5;
  double pad_sigma_t = 10.0;             ///< meters
  double pad_sigma_deg = 2.0;
  double fd_step_t = 0.5;                ///< meters
  double fd_step_deg = 0.5;
  int refine_max_iters = 200;
  std::vector<double> pattern_steps{8.0, 4.0, 2.0, 1.0, 0.5};  ///< compass steps, meters and degrees
  int refine_rounds = 6;
};

namespace detail {

inline std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage)};
  std::uint32_t parts[2];
  seq.generate(parts, parts + 2);
  return (static_cast<std::uint64_t>(parts[0]) << 32) | parts[1];
}

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline std::vector<Bound> translation_bounds(const HoughParams& p) {
  return {{p.extent.min_x, p.extent.max_x, false}, {p.extent.min_y, p.extent.max_y, false}};
}

inline std::vector<RigidTransform> unpack_full(const std::vector<double>& x) {
  std::vector<RigidTransform> t;
  for (std::size_t i = 0; i + 2 < x.size(); i += 3) t.emplace_back(x[i], x[i + 1], x[i + 2]);
  return t;
}

inline std::vector<RigidTransform> apply_relations(const RigidTransform& t0, const std::vector<RigidTransform>& rel) {
  std::vector<RigidTransform> t;
  t.reserve(rel.size());
  for (const RigidTransform& r : rel) t.push_back(compose_rigid(t0, r));
  return t;
}

}  // namespace detail

/// Monotone BFGS ascent on the full fitness with central finite
/// differences; rotations are handled in degrees.
inline std::vector<RigidTransform> refine_bfgs(const FullFitness& fit, std::vector<RigidTransform> start,
                                                const SolverConfig& cfg) {
  const int n = static_cast<int>(start.size());
  const int dim = 3 * n;
  auto to_vec = [&](const std::vector<RigidTransform>& t) {
    Eigen::VectorXd x(dim);
    for (int k = 0; k < n; ++k) {
      x(3 * k) = t[k].vx();
      x(3 * k + 1) = t[k].vy();
      double deg = rad_to_deg(t[k].gamma());
      if (deg > 180.0) deg -= 360.0;
      x(3 * k + 2) = deg;
    }
    return x;
  };
  auto from_vec = [&](const Eigen::VectorXd& x) {
    std::vector<RigidTransform> t;
    t.reserve(n);
    for (int k = 0; k < n; ++k) t.emplace_back(x(3 * k), x(3 * k + 1), deg_to_rad(x(3 * k + 2)));
    return t;
  };
  auto f = [&](const Eigen::VectorXd& x) { return -fit(from_vec(x)); };
  auto grad = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(dim);
    Eigen::VectorXd y = x;
    for (int i = 0; i < dim; ++i) {
      const double h = (i % 3 == 2) ? cfg.fd_step_deg : cfg.fd_step_t;
      y(i) = x(i) + h;
      const double fp = f(y);
      y(i) = x(i) - h;
      const double fm = f(y);
      y(i) = x(i);
      g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
  };

  Eigen::VectorXd x = to_vec(start);
  double fx = f(x);
  Eigen::VectorXd g = grad(x);
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(dim, dim);
  bool scaled = false;
  for (int it = 0; it < cfg.refine_max_iters; ++it) {
    if (!(g.norm() > 0.0)) break;
    Eigen::VectorXd p = -hinv * g;
    if (!scaled || p.dot(g) >= 0.0) {
      p = -g / g.norm();  // unit step in parameter space
      if (scaled) hinv = Eigen::MatrixXd::Identity(dim, dim) * (1.0 / g.norm());
    }
    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd xn;
    double fn = fx;
    for (int bt = 0; bt < 30; ++bt) {
      xn = x + alpha * p;
      fn = f(xn);
      if (fn < fx + 1e-4 * alpha * g.dot(p)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    const Eigen::VectorXd gn = grad(xn);
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-18) {
      if (!scaled) {
        hinv = Eigen::MatrixXd::Identity(dim, dim) * (sy / y.dot(y));
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(dim, dim);
      hinv = (I - rho * s * y.transpose()) * hinv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    const double gain = fx - fn;
    x = xn;
    fx = fn;
    g = gn;
    if (s.norm() < 1e-6 || gain <= 1e-12 * std::max(1e-300, std::abs(fx))) break;
  }
  std::vector<RigidTransform> out = from_vec(x);
  if (fit(out) < fit(start)) return start;
  return out;
}

/// Compass search: each coordinate is probed at +-step for every step in
/// the schedule, together with rigid moves of the whole group (a joint
/// shift, and a joint rotation about each image's position); improving
/// moves are kept.
inline std::vector<RigidTransform> refine_pattern(const FullFitness& fit, std::vector<RigidTransform> t,
                                                  const SolverConfig& cfg) {
  double best = fit(t);
  auto try_move = [&](std::vector<RigidTransform> u) {
    const double v = fit(u);
    if (!(v > best)) return false;
    best = v;
    t = std::move(u);
    return true;
  };
  auto group_moves = [&](double step) {
    bool any = false;
    for (int c = 0; c < 2; ++c) {
      for (double sign : {1.0, -1.0}) {
        std::vector<RigidTransform> u;
        for (const RigidTransform& o : t) u.emplace_back(o.vx() + (c == 0 ? sign * step : 0.0), o.vy() + (c == 1 ? sign * step : 0.0), o.gamma());
        any = try_move(std::move(u)) || any;
      }
    }
    for (std::size_t p = 0; p < t.size(); ++p) {
      for (double sign : {1.0, -1.0}) {
        const double d = sign * deg_to_rad(step);
        const Point2 pivot = t[p].translation();
        std::vector<RigidTransform> u;
        for (const RigidTransform& o : t) {
          const Point2 q = pivot + rotate(d, o.translation() - pivot);
          u.emplace_back(q.x, q.y, o.gamma() + d);
        }
        any = try_move(std::move(u)) || any;
      }
    }
    return any;
  };
  for (double step : cfg.pattern_steps) {
    bool moved = true;
    while (moved) {
      moved = group_moves(step);
      for (std::size_t k = 0; k < t.size(); ++k) {
        for (int c = 0; c < 3; ++c) {
          for (double sign : {1.0, -1.0}) {
            std::vector<RigidTransform> u = t;
            const RigidTransform& o = t[k];
            if (c == 0) u[k] = {o.vx() + sign * step, o.vy(), o.gamma()};
            if (c == 1) u[k] = {o.vx(), o.vy() + sign * step, o.gamma()};
            if (c == 2) u[k] = {o.vx(), o.vy(), o.gamma() + sign * deg_to_rad(step)};
            if (try_move(std::move(u))) {
              moved = true;
              break;
            }
          }
        }
      }
    }
  }
  return t;
}

/// Alternates BFGS ascent and compass search until neither improves.
inline std::vector<RigidTransform> refine_joint(const FullFitness& fit, std::vector<RigidTransform> t,
                                                const SolverConfig& cfg) {
  double best = fit(t);
  for (int round = 0; round < std::max(1, cfg.refine_rounds); ++round) {
    t = refine_pattern(fit, refine_bfgs(fit, std::move(t), cfg), cfg);
    const double v = fit(t);
    if (!(v > best * (1.0 + 1e-12))) break;
    best = v;
  }
  return t;
}

/// Sequential solver: rotations among historical images, translations among
/// historical images, the reference transform of image 0, then joint
/// refinement of all 3N parameters.
inline GroupSolution solve_sequential(const ImageGroup& group, const RelationMask& mask, const SolverConfig& cfg = {}) {
  const int n = group.size();
  if (n < 1) throw Error("group has no historical images");
  detail::check_mask(group, mask);
  const HoughParams& hp = group.params;
  const FullFitness full(group, mask);
  GroupSolution sol;
  detail::Stopwatch clock;

  std::vector<double> rot(n > 1 ? n - 1 : 0, 0.0);
  std::vector<RigidTransform> rel(n);  // image k -> image 0

  if (n > 1) {
    // Stage 1: rotations.
    const RotationFitness jr(group, mask);
    std::map<std::pair<int, int>, RotationEstimator> rest;
    RelationGraph rg;
    for (int k = 0; k < n; ++k) rg.add_node(k);
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        if (a != 0 && !mask(a, b)) continue;
        rest[{a, b}] = group.space(a, b).rotation_estimator();
        rest[{b, a}] = group.space(b, a).rotation_estimator();
        rg.add_edge(a, b, 1.0 / rest[{a, b}].max_value());
      }
    }
    const auto init = greedy_init(rg, 0, [&](int a, int b) { return RigidTransform(0, 0, rest.at({a, b}).argmax_angle()); });
    std::vector<double> x0(n - 1);
    std::vector<std::pair<double, int>> conf;
    for (int k = 1; k < n; ++k) {
      x0[k - 1] = init.at(k).value.gamma();
      conf.push_back({init.at(k).confidence, k - 1});
    }
    std::sort(conf.begin(), conf.end());
    const int randomized = static_cast<int>(std::ceil(cfg.randomize_fraction * (n - 1) - 1e-9));
    PsoConfig pc = cfg.pso;
    pc.rng_seed = detail::stage_seed(cfg.pso.rng_seed, 1);
    std::mt19937_64 rng(detail::stage_seed(cfg.pso.rng_seed, 11));
    std::uniform_real_distribution<double> ua(0.0, kTwoPi);
    std::vector<std::vector<double>> particles{x0};
    for (int i = 1; i < pc.particle_count; ++i) {
      std::vector<double> p = x0;
      for (int j = 0; j < randomized; ++j) p[conf[j].second] = ua(rng);
      particles.push_back(std::move(p));
    }
    const std::vector<Bound> rb(n - 1, Bound{0.0, kTwoPi, true});
    const PsoResult r1 = pso_minimize([&](const std::vector<double>& r) { return -jr(r); }, rb, particles, pc);
    rot = r1.position;
    sol.stage_trace.push_back({"rotation", -r1.value, clock.lap()});

    // Stage 2: translations with rotations fixed.
    const TranslationFitness jv(group, mask, rot);
    auto rot_of = [&](int k) { return k == 0 ? 0.0 : rot[k - 1]; };
    std::map<std::pair<int, int>, TranslationEstimator::Argmax> targ;
    RelationGraph tg;
    for (int k = 0; k < n; ++k) tg.add_node(k);
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        if (a != 0 && !mask(a, b)) continue;
        targ[{a, b}] = group.space(a, b).translation_estimator(rot_of(a) - rot_of(b)).argmax();
        targ[{b, a}] = group.space(b, a).translation_estimator(rot_of(b) - rot_of(a)).argmax();
        tg.add_edge(a, b, 1.0 / targ[{a, b}].value);
      }
    }
    const auto tinit = greedy_init(tg, 0, [&](int a, int b) {
      const Point2 v = targ.at({a, b}).translation;
      return RigidTransform(v.x, v.y, rot_of(a) - rot_of(b));
    });
    std::vector<double> y0;
    for (int k = 1; k < n; ++k) {
      y0.push_back(tinit.at(k).value.vx());
      y0.push_back(tinit.at(k).value.vy());
    }
    PsoConfig tc = cfg.pso;
    tc.rng_seed = detail::stage_seed(cfg.pso.rng_seed, 2);
    std::normal_distribution<double> jitter(0.0, cfg.translation_jitter);
    std::vector<std::vector<double>> tparticles{y0};
    for (int i = 1; i < tc.particle_count; ++i) {
      std::vector<double> p = y0;
      for (double& v : p) v += jitter(rng);
      tparticles.push_back(std::move(p));
    }
    std::vector<Bound> tb;
    for (int k = 1; k < n; ++k) {
      for (const Bound& b : detail::translation_bounds(hp)) tb.push_back(b);
    }
    auto unpack_v = [](const std::vector<double>& y) {
      std::vector<Point2> v;
      for (std::size_t i = 0; i + 1 < y.size(); i += 2) v.push_back({y[i], y[i + 1]});
      return v;
    };
    const PsoResult r2 = pso_minimize([&](const std::vector<double>& y) { return -jv(unpack_v(y)); }, tb, tparticles, tc);
    const std::vector<Point2> vv = unpack_v(r2.position);
    for (int k = 1; k < n; ++k) rel[k] = {vv[k - 1].x, vv[k - 1].y, rot[k - 1]};
    sol.stage_trace.push_back({"translation", -r2.value, clock.lap()});
  }

  // Stage 3: transform of image 0 to the reference.
  struct Candidate {
    double likelihood;
    int k;
    RigidTransform t0;
  };
  std::vector<Candidate> cands;
  for (int k = 0; k < n; ++k) {
    const auto a = group.space(k, kReference).argmax();
    cands.push_back({a.value, k, compose_rigid(a.transform, invert_rigid(rel[k]))});
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
    if (x.likelihood != y.likelihood) return x.likelihood > y.likelihood;
    return x.k < y.k;
  });
  const int np = std::max(1, cfg.reference_particles);
  if (static_cast<int>(cands.size()) > np) cands.resize(np);
  std::vector<std::vector<double>> rparticles;
  for (const Candidate& c : cands) rparticles.push_back({c.t0.vx(), c.t0.vy(), c.t0.gamma()});
  std::mt19937_64 prng(detail::stage_seed(cfg.pso.rng_seed, 33));
  std::normal_distribution<double> pt(0.0, cfg.pad_sigma_t), pg(0.0, deg_to_rad(cfg.pad_sigma_deg));
  while (static_cast<int>(rparticles.size()) < np) {
    const RigidTransform& b = cands.front().t0;
    rparticles.push_back({b.vx() + pt(prng), b.vy() + pt(prng), b.gamma() + pg(prng)});
  }
  PsoConfig sc = cfg.pso;
  sc.particle_count = np;
  sc.rng_seed = detail::stage_seed(cfg.pso.rng_seed, 3);
  std::vector<Bound> bounds3 = detail::translation_bounds(hp);
  bounds3.push_back({0.0, kTwoPi, true});
  const PsoResult r3 = pso_minimize(
      [&](const std::vector<double>& x) { return -full(detail::apply_relations({x[0], x[1], x[2]}, rel)); }, bounds3,
      rparticles, sc);
  const std::vector<RigidTransform> staged = detail::apply_relations({r3.position[0], r3.position[1], r3.position[2]}, rel);
  sol.stage_trace.push_back({"reference", full(staged), clock.lap()});

  // Stage 4: joint refinement from the staged solution and from every
  // reference candidate; the fittest result wins.
  std::vector<std::vector<RigidTransform>> starts{staged};
  for (const Candidate& c : cands) starts.push_back(detail::apply_relations(c.t0, rel));
  sol.fitness = -std::numeric_limits<double>::infinity();
  for (const auto& start : starts) {
    std::vector<RigidTransform> t = refine_joint(full, start, cfg);
    const double v = full(t);
    if (v > sol.fitness) {
      sol.fitness = v;
      sol.transforms = std::move(t);
    }
  }
  if (!std::isfinite(sol.fitness)) throw Error("refinement produced a non-finite fitness");
  sol.stage_trace.push_back({"refine", sol.fitness, clock.lap()});
  return sol;
}

/// Baseline: one PSO over all 3N parameters, particles sampled per image
/// from the direct space interpreted as a discrete distribution.
inline GroupSolution solve_direct_pso(const ImageGroup& group, const RelationMask& mask, int particle_count,
                                      const SolverConfig& cfg = {}) {
  const int n = group.size();
  if (n < 1) throw Error("group has no historical images");
  const FullFitness full(group, mask);
  const HoughParams& hp = group.params;
  detail::Stopwatch clock;
  std::mt19937_64 rng(detail::stage_seed(cfg.pso.rng_seed, 101));
  std::vector<std::vector<HoughEntry>> entries(n);
  std::vector<std::discrete_distribution<std::size_t>> dists;
  for (int k = 0; k < n; ++k) {
    entries[k] = group.space(k, kReference).entries();
    std::vector<double> w;
    for (const HoughEntry& e : entries[k]) w.push_back(e.mass);
    dists.emplace_back(w.begin(), w.end());
  }
  std::vector<std::vector<double>> particles;
  for (int i = 0; i < particle_count; ++i) {
    std::vector<double> p;
    for (int k = 0; k < n; ++k) {
      const HoughEntry& e = entries[k][dists[k](rng)];
      p.push_back(e.ix * hp.trans_bin);
      p.push_back(e.iy * hp.trans_bin);
      p.push_back(e.ig * hp.rot_bin_width());
    }
    particles.push_back(std::move(p));
  }
  std::vector<Bound> bounds;
  for (int k = 0; k < n; ++k) {
    for (const Bound& b : detail::translation_bounds(hp)) bounds.push_back(b);
    bounds.push_back({0.0, kTwoPi, true});
  }
  PsoConfig pc = cfg.pso;
  pc.particle_count = particle_count;
  pc.rng_seed = detail::stage_seed(cfg.pso.rng_seed, 102);
  const PsoResult r = pso_minimize([&](const std::vector<double>& x) { return -full(detail::unpack_full(x)); }, bounds,
                                   particles, pc);
  GroupSolution sol;
  sol.transforms = detail::unpack_full(r.position);
  sol.fitness = full(sol.transforms);
  sol.stage_trace.push_back({"direct-pso", sol.fitness, clock.lap()});
  return sol;
}

// ---------------------------------------------------------------------------
// Text document

inline void write_solution(std::ostream& os, const ImageGroup& group, const GroupSolution& sol) {
  os << std::setprecision(17);
  os << "# groupreg solution: image id, vx vy gamma_deg (image -> reference, meters, center origin)\n";
  os << "reference " << group.reference << '\n';
  os << "fitness " << sol.fitness << '\n';
  for (std::size_t k = 0; k < sol.transforms.size(); ++k) {
    os << "image " << group.historical.at(k) << ' ' << format_rigid(sol.transforms[k]) << '\n';
  }
  for (const StageRecord& s : sol.stage_trace) os << "stage " << s.name << ' ' << s.fitness << ' ' << s.seconds << '\n';
}

struct SolutionDocument {
  std::string reference;
  std::vector<std::string> ids;
  GroupSolution solution;
};

inline SolutionDocument read_solution(std::istream& is) {
  SolutionDocument doc;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "reference") {
      ls >> doc.reference;
    } else if (tag == "fitness") {
      ls >> doc.solution.fitness;
    } else if (tag == "image") {
      std::string id;
      ls >> id;
      doc.ids.push_back(id);
      doc.solution.transforms.push_back(parse_rigid(ls));
    } else if (tag == "stage") {
      StageRecord s;
      ls >> s.name >> s.fitness >> s.seconds;
      doc.solution.stage_trace.push_back(s);
    } else {
      throw Error("unknown solution record: " + tag);
    }
    if (ls.fail()) throw Error("malformed solution line: " + line);
  }
  return doc;
}

}  // namespace groupreg
