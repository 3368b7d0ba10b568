#pragma once

// Guided matching under a rigid prior, RANSAC homography estimation and
// homography concatenation along graph paths to the reference.

#include "groupreg/features.hpp"
#include "groupreg/graph.hpp"
#include "groupreg/groupwise.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <thread>
#include <vector>

namespace groupreg {

struct Correspondence {
  Point2 a;
  Point2 b;
};

inline std::vector<Correspondence> to_correspondences(std::span<const Match> matches) {
  std::vector<Correspondence> out;
  out.reserve(matches.size());
  for (const Match& m : matches) out.push_back({m.frame_a.position(), m.frame_b.position()});
  return out;
}

struct GuidedMatchConfig {
  double position_threshold = 500.0;  ///< meters
  double scale_ratio_max = 1.4;
  int ransac_iters = 2000;
  double ransac_inlier_threshold = 5.0;  ///< meters
  int ransac_min_inliers = 12;
  std::uint64_t rng_seed = 1;
  double descriptor_support = 6.0;  ///< descriptor half-width in keypoint scales
  DogConfig dog;
  int threads = 1;

  void validate() const {
    if (!(position_threshold > 0.0)) throw Error("position_threshold must be positive");
    if (!(scale_ratio_max > 1.0)) throw Error("scale_ratio_max must exceed 1");
    if (ransac_iters < 1 || ransac_min_inliers < 4) throw Error("invalid RANSAC settings");
  }
};

class RansacFailure : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Homography estimation

namespace detail {

/// Similarity transform moving the centroid to the origin with mean distance
/// sqrt(2).
inline Eigen::Matrix3d hartley_normalizer(const std::vector<Point2>& pts) {
  double cx = 0.0, cy = 0.0;
  for (const Point2& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= pts.size();
  cy /= pts.size();
  double mean = 0.0;
  for (const Point2& p : pts) mean += std::hypot(p.x - cx, p.y - cy);
  mean /= pts.size();
  const double s = mean > 0.0 ? std::sqrt(2.0) / mean : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

inline double reprojection_error(const Homography& h, const Correspondence& c) { return distance(h.apply(c.a), c.b); }

/// True when some three of the four points are (nearly) collinear.
inline bool degenerate_quad(const std::array<Point2, 4>& p) {
  double spread = 0.0;
  for (const Point2& a : p) {
    for (const Point2& b : p) spread = std::max(spread, distance(a, b));
  }
  if (!(spread > 0.0)) return true;
  static constexpr int kTriples[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  for (const auto& t : kTriples) {
    const Point2 u = p[t[1]] - p[t[0]], v = p[t[2]] - p[t[0]];
    if (std::abs(u.x * v.y - u.y * v.x) < 1e-3 * spread * spread) return true;
  }
  return false;
}

/// Local Jacobian determinant of the mapping at `p`; negative values mean a
/// reflection and huge or tiny values a near-singular model.
inline double jacobian_det(const Homography& h, Point2 p) {
  const Eigen::Matrix3d& m = h.matrix();
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  return m.determinant() / (w * w * w);
}

}  // namespace detail

/// Normalized direct linear transform over >= 4 correspondences.
inline Homography estimate_homography_dlt(std::span<const Correspondence> corr) {
  if (corr.size() < 4) throw Error("homography estimation needs at least 4 correspondences");
  std::vector<Point2> pa, pb;
  for (const Correspondence& c : corr) {
    pa.push_back(c.a);
    pb.push_back(c.b);
  }
  const Eigen::Matrix3d ta = detail::hartley_normalizer(pa), tb = detail::hartley_normalizer(pb);
  Eigen::MatrixXd a(2 * corr.size(), 9);
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const Eigen::Vector3d p = ta * Eigen::Vector3d(pa[i].x, pa[i].y, 1.0);
    const Eigen::Vector3d q = tb * Eigen::Vector3d(pb[i].x, pb[i].y, 1.0);
    const double x = p.x(), y = p.y(), u = q.x(), v = q.y();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography(tb.inverse() * hn * ta);
}

struct RansacResult {
  Homography homography;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;  ///< distinct target points among the inliers
};

inline RansacResult ransac_homography(std::span<const Correspondence> corr, const GuidedMatchConfig& cfg) {
  if (corr.size() < 4) throw RansacFailure("RANSAC needs at least 4 correspondences");
  const std::size_t n = corr.size();
  std::mt19937_64 rng(cfg.rng_seed);
  const double thr = cfg.ransac_inlier_threshold;

  // Support is counted in distinct target points, so many sources
  // collapsing onto one b point back a model only once.
  std::vector<std::size_t> target(n);
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto key = [&](std::size_t i) { return std::pair{corr[i].b.x, corr[i].b.y}; };
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return key(x) < key(y); });
    std::size_t id = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (r > 0 && key(order[r]) != key(order[r - 1])) ++id;
      target[order[r]] = id;
    }
  }
  std::vector<std::uint32_t> seen(n, 0);
  std::uint32_t stamp = 0;
  auto score = [&](const Homography& h, std::vector<bool>& mask) {
    std::size_t count = 0;
    double err = 0.0;
    ++stamp;
    mask.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      const double e = detail::reprojection_error(h, corr[i]);
      if (e < thr) {
        mask[i] = true;
        err += e;
        if (seen[target[i]] != stamp) {
          seen[target[i]] = stamp;
          ++count;
        }
      }
    }
    return std::pair{count, err};
  };

  std::size_t best_count = 0;
  double best_err = 0.0;
  std::vector<bool> best_mask, mask;
  std::optional<Homography> best;
  std::array<std::size_t, 4> idx{};
  for (int it = 0; it < cfg.ransac_iters; ++it) {
    for (int j = 0; j < 4; ++j) {
      bool fresh;
      do {
        idx[j] = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        fresh = std::find(idx.begin(), idx.begin() + j, idx[j]) == idx.begin() + j;
      } while (!fresh);
    }
    const std::array<Correspondence, 4> sample{corr[idx[0]], corr[idx[1]], corr[idx[2]], corr[idx[3]]};
    if (detail::degenerate_quad({sample[0].a, sample[1].a, sample[2].a, sample[3].a}) ||
        detail::degenerate_quad({sample[0].b, sample[1].b, sample[2].b, sample[3].b})) {
      continue;
    }
    Homography h;
    try {
      h = estimate_homography_dlt(sample);
    } catch (const Error&) {
      continue;
    }
    if (!std::all_of(sample.begin(), sample.end(), [&](const Correspondence& c) { return detail::jacobian_det(h, c.a) > 0.0; })) {
      continue;
    }
    const auto [count, err] = score(h, mask);
    if (count > best_count || (count == best_count && count > 0 && err < best_err)) {
      best_count = count;
      best_err = err;
      best_mask = mask;
      best = h;
    }
  }
  if (!best || best_count < static_cast<std::size_t>(std::max(4, cfg.ransac_min_inliers))) {
    throw RansacFailure("RANSAC found " + std::to_string(best_count) + " inliers, fewer than required");
  }
  // Re-estimate over the inliers until the inlier set stops growing.
  RansacResult res{*best, best_mask, best_count};
  for (int round = 0; round < 5; ++round) {
    std::vector<Correspondence> in;
    for (std::size_t i = 0; i < n; ++i) {
      if (res.inliers[i]) in.push_back(corr[i]);
    }
    Homography h;
    try {
      h = estimate_homography_dlt(in);
    } catch (const Error&) {
      break;
    }
    const auto [count, err] = score(h, mask);
    if (count < res.inlier_count) break;
    const bool same = mask == res.inliers;
    res = {h, mask, count};
    if (same) break;
  }
  if (res.inlier_count < static_cast<std::size_t>(cfg.ransac_min_inliers)) {
    throw RansacFailure("RANSAC refit lost too many inliers");
  }
  return res;
}

// ---------------------------------------------------------------------------
// Guided matching

struct KeypointFeatures {
  std::vector<FeatureFrame> frames;  ///< DoG keypoint frames (sigma = blob scale)
  std::vector<Descriptor> descriptors;
};

/// DoG keypoints of `img` with descriptors at the forced orientation `theta`;
/// keypoints whose descriptor support leaves the image are dropped.
inline KeypointFeatures keypoint_features(const ImageGrid& img, double theta, const GuidedMatchConfig& cfg) {
  KeypointFeatures out;
  DescriptorExtractor ex(img);
  for (const FeatureFrame& kp : detect_dog_keypoints(img, cfg.dog)) {
    FeatureFrame support = kp;
    support.sigma = cfg.descriptor_support * kp.sigma;
    if (!ex.support_inside(support)) continue;
    const Descriptor d = ex.descriptor(support, normalize_angle(theta));
    if (is_degenerate(d)) continue;
    out.frames.push_back(kp);
    out.descriptors.push_back(d);
  }
  return out;
}

inline bool passes_gates(const FeatureFrame& a, const FeatureFrame& b, const RigidTransform& prior,
                         const GuidedMatchConfig& cfg) {
  if (distance(apply_rigid(prior, a.position()), b.position()) > cfg.position_threshold) return false;
  const double r = b.sigma / a.sigma;
  return r > 1.0 / cfg.scale_ratio_max && r < cfg.scale_ratio_max;
}

/// For every keypoint of a, the nearest descriptor among the keypoints of b
/// that pass the position and scale gates under `prior` (a -> b). Image b
/// descriptors use orientation 0 and image a descriptors the prior rotation,
/// which puts both in one canonical frame.
inline std::vector<Match> guided_match(const ImageGrid& img_a, const ImageGrid& img_b, const RigidTransform& prior,
                                       const GuidedMatchConfig& cfg) {
  cfg.validate();
  const KeypointFeatures fa = keypoint_features(img_a, prior.gamma(), cfg);
  const KeypointFeatures fb = keypoint_features(img_b, 0.0, cfg);
  std::vector<Match> out;
  if (fa.frames.empty() || fb.frames.empty()) return out;
  for (std::size_t i = 0; i < fa.frames.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < fb.frames.size(); ++j) {
      if (!passes_gates(fa.frames[i], fb.frames[j], prior, cfg)) continue;
      const double d = descriptor_distance(fa.descriptors[i], fb.descriptors[j]);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    if (!std::isfinite(best)) continue;
    FeatureFrame a = fa.frames[i], b = fb.frames[arg];
    a.theta = normalize_angle(prior.gamma());
    b.theta = 0.0;
    out.push_back({a, b, similarity_from_distance(best), static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(arg)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Registration to the reference

enum class RegistrationStatus { Rigid, Homography, Flagged };

inline const char* status_name(RegistrationStatus s) {
  switch (s) {
    case RegistrationStatus::Rigid: return "rigid";
    case RegistrationStatus::Homography: return "homography";
    case RegistrationStatus::Flagged: return "flagged";
  }
  return "?";
}

inline RegistrationStatus parse_status(const std::string& s) {
  if (s == "rigid") return RegistrationStatus::Rigid;
  if (s == "homography") return RegistrationStatus::Homography;
  if (s == "flagged") return RegistrationStatus::Flagged;
  throw Error("unknown registration status: " + s);
}

struct ImageRegistration {
  Homography homography;  ///< historical image -> reference
  RegistrationStatus status = RegistrationStatus::Rigid;
  std::size_t inlier_count = 0;  ///< smallest inlier count along the path
  std::vector<int> path;
};

struct EdgeRefinement {
  Homography homography;
  bool refined = false;
  std::size_t inliers = 0;
};

/// Guided matching plus RANSAC on one directed edge; falls back to the rigid
/// prior when RANSAC fails.
inline EdgeRefinement refine_edge(const ImageGrid& a, const ImageGrid& b, const RigidTransform& prior,
                                  const GuidedMatchConfig& cfg) {
  const std::vector<Match> m = guided_match(a, b, prior, cfg);
  const std::vector<Correspondence> c = to_correspondences(m);
  try {
    const RansacResult r = ransac_homography(c, cfg);
    return {r.homography, true, r.inlier_count};
  } catch (const RansacFailure&) {
    return {rigid_to_homography(prior), false, 0};
  }
}

/// Relation graph over historical images and the reference, weighted by the
/// inverse likelihood of the solution's pairwise transforms.
inline RelationGraph solution_graph(const ImageGroup& group, const GroupSolution& sol) {
  RelationGraph g;
  g.add_node(kReference);
  const int n = group.size();
  for (int k = 0; k < n; ++k) {
    g.add_node(k);
    const double p = group.space(k, kReference).lookup(sol.transforms[k]);
    if (p > 0.0) g.add_edge(k, kReference, 1.0 / p);
    for (int l = k + 1; l < n; ++l) {
      if (!group.has_space(k, l)) continue;
      const double q = group.space(k, l).lookup(compose_via_reference(sol.transforms[k], sol.transforms[l]));
      if (q > 0.0) g.add_edge(k, l, 1.0 / q);
    }
  }
  return g;
}

inline std::map<int, GraphPath> find_paths_to_reference(const RelationGraph& graph) {
  return greedy_paths(graph, kReference);
}

/// `images[k]` is historical image k; the edge seed is derived from the
/// configured seed and the edge endpoints.
inline std::map<int, ImageRegistration> register_to_reference(const ImageGroup& group, const GroupSolution& sol,
                                                              const std::vector<ImageGrid>& images,
                                                              const ImageGrid& reference, const GuidedMatchConfig& cfg,
                                                              bool guided = true) {
  cfg.validate();
  const int n = group.size();
  if (static_cast<int>(images.size()) != n || static_cast<int>(sol.transforms.size()) != n) {
    throw Error("image and transform counts must match the group");
  }
  const auto paths = find_paths_to_reference(solution_graph(group, sol));
  auto to_ref = [&](int k) { return k == kReference ? RigidTransform{} : sol.transforms[k]; };

  std::vector<std::pair<int, int>> edges;
  for (const auto& [k, p] : paths) {
    for (std::size_t i = 0; i + 1 < p.nodes.size(); ++i) edges.push_back({p.nodes[i], p.nodes[i + 1]});
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<EdgeRefinement> refined(edges.size());
  auto work = [&](std::size_t e) {
    const auto [a, b] = edges[e];
    const RigidTransform prior = compose_via_reference(to_ref(a), to_ref(b));
    if (!guided) {
      refined[e] = {rigid_to_homography(prior), false, 0};
      return;
    }
    GuidedMatchConfig ec = cfg;
    ec.rng_seed = detail::stage_seed(cfg.rng_seed, static_cast<std::uint64_t>((a + 2) * 1000 + (b + 2)));
    refined[e] = refine_edge(a == kReference ? reference : images[a], b == kReference ? reference : images[b], prior, ec);
  };
  const int workers = std::max(1, std::min<int>(cfg.threads, static_cast<int>(edges.size())));
  if (workers == 1) {
    for (std::size_t e = 0; e < edges.size(); ++e) work(e);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t e = static_cast<std::size_t>(w); e < edges.size(); e += static_cast<std::size_t>(workers)) work(e);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::map<int, ImageRegistration> out;
  for (const auto& [k, p] : paths) {
    ImageRegistration r;
    r.path = p.nodes;
    bool all_refined = true;
    std::size_t min_inliers = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i + 1 < p.nodes.size(); ++i) {
      const auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{p.nodes[i], p.nodes[i + 1]});
      const EdgeRefinement& e = refined[static_cast<std::size_t>(it - edges.begin())];
      r.homography = compose_homography(e.homography, r.homography);
      all_refined = all_refined && e.refined;
      min_inliers = std::min(min_inliers, e.inliers);
    }
    r.inlier_count = min_inliers;
    r.status = !guided ? RegistrationStatus::Rigid
                       : (all_refined ? RegistrationStatus::Homography : RegistrationStatus::Flagged);
    out[k] = r;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Records: `image_id status h00 ... h22 inlier_count`

inline void write_registrations(std::ostream& os, const ImageGroup& group, const std::map<int, ImageRegistration>& regs) {
  os << "# image_id status h00 h01 h02 h10 h11 h12 h20 h21 h22 inlier_count (historical -> reference, meters)\n";
  for (const auto& [k, r] : regs) {
    os << group.historical.at(k) << ' ' << status_name(r.status) << ' ' << format_homography(r.homography) << ' '
       << r.inlier_count << '\n';
  }
}

struct RegistrationRecord {
  std::string image_id;
  RegistrationStatus status = RegistrationStatus::Rigid;
  Homography homography;
  std::size_t inlier_count = 0;
};

inline std::vector<RegistrationRecord> read_registrations(std::istream& is) {
  std::vector<RegistrationRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    RegistrationRecord r;
    std::string status;
    if (!(ls >> r.image_id >> status)) throw Error("malformed registration line: " + line);
    r.status = parse_status(status);
    r.homography = parse_homography(ls);
    if (!(ls >> r.inlier_count)) throw Error("malformed registration line: " + line);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace groupreg
