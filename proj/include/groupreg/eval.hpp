#pragma once

// Registration metrics, ground-truth and metrics CSV files, and the
// topology-matching baseline (all-pairs matching with shortest paths).

#include "groupreg/features.hpp"
#include "groupreg/guided.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace groupreg {

struct GtPair {
  Point2 hist;
  Point2 opm;
};

using PointMap = std::function<Point2(Point2)>;

inline double rmse(const std::vector<GtPair>& gt, const PointMap& mapping) {
  if (gt.empty()) throw Error("rmse needs at least one correspondence");
  double acc = 0.0;
  for (const GtPair& p : gt) {
    const Point2 q = mapping(p.hist);
    acc += (q.x - p.opm.x) * (q.x - p.opm.x) + (q.y - p.opm.y) * (q.y - p.opm.y);
  }
  return std::sqrt(acc / static_cast<double>(gt.size()));
}

struct ComponentErrors {
  double translation_m = 0.0;
  double rotation_deg = 0.0;
};

inline ComponentErrors rigid_component_errors(const RigidTransform& estimated, const RigidTransform& truth) {
  return {distance(estimated.translation(), truth.translation()),
          std::abs(rad_to_deg(angle_diff(estimated.gamma(), truth.gamma())))};
}

/// Fraction of matches whose b position lies within `ground_distance` of the
/// true image of their a position.
inline double inlier_ratio(const std::vector<Correspondence>& matches, const PointMap& gt_mapping,
                           double ground_distance) {
  if (matches.empty()) throw Error("inlier ratio of an empty match list is undefined");
  std::size_t good = 0;
  for (const Correspondence& c : matches) {
    if (distance(gt_mapping(c.a), c.b) <= ground_distance) ++good;
  }
  return static_cast<double>(good) / static_cast<double>(matches.size());
}

// ---------------------------------------------------------------------------
// CSV files

using GroundTruth = std::map<std::string, std::vector<GtPair>>;

inline void write_ground_truth_csv(std::ostream& os, const GroundTruth& gt) {
  os << std::setprecision(17);
  os << "# coordinates in meters, image-center origin, y down\n";
  os << "image_id,x_hist,y_hist,x_opm,y_opm\n";
  for (const auto& [id, pairs] : gt) {
    for (const GtPair& p : pairs) os << id << ',' << p.hist.x << ',' << p.hist.y << ',' << p.opm.x << ',' << p.opm.y << '\n';
  }
}

inline GroundTruth read_ground_truth_csv(std::istream& is) {
  GroundTruth gt;
  std::string line;
  bool header = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.find("corner") != std::string::npos) throw Error("ground truth must use image-center coordinates");
      continue;
    }
    if (!header) {
      if (line != "image_id,x_hist,y_hist,x_opm,y_opm") throw Error("unexpected ground truth header: " + line);
      header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string id, f[4];
    std::getline(ls, id, ',');
    for (auto& x : f) std::getline(ls, x, ',');
    try {
      gt[id].push_back({{std::stod(f[0]), std::stod(f[1])}, {std::stod(f[2]), std::stod(f[3])}});
    } catch (const std::exception&) {
      throw Error("malformed ground truth row: " + line);
    }
  }
  if (!header) throw Error("ground truth file has no header");
  return gt;
}

struct MetricsRow {
  std::string image_id;
  double rmse_m = 0.0;
  double trans_err_m = std::numeric_limits<double>::quiet_NaN();
  double rot_err_deg = std::numeric_limits<double>::quiet_NaN();
};

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << std::setprecision(10);
  os << "image_id,rmse_m,trans_err_m,rot_err_deg\n";
  for (const MetricsRow& r : rows) {
    os << r.image_id << ',' << r.rmse_m << ',' << r.trans_err_m << ',' << r.rot_err_deg << '\n';
  }
}

// ---------------------------------------------------------------------------
// Topology-matching baseline

struct BaselineConfig {
  double step = 40.0;
  double support = 360.0;
  double tau = 1.0 / 1.3;
  GuidedMatchConfig ransac;
};

struct BaselineResult {
  std::optional<Homography> homography;  ///< empty when no path reaches the reference
  std::vector<int> path;
  std::size_t inliers = 0;  ///< inliers of the direct pairwise registration
};

/// Pairwise distance-ratio matching and RANSAC between all images, edge
/// weights 1/inliers, Floyd-Warshall shortest paths to the reference
/// (index kReference) and homography concatenation along them.
inline std::map<int, BaselineResult> topology_baseline(const std::vector<ImageGrid>& images, const ImageGrid& reference,
                                                       const BaselineConfig& cfg) {
  const int n = static_cast<int>(images.size());
  const int m = n + 1;  // node n is the reference
  auto node_image = [&](int i) -> const ImageGrid& { return i == n ? reference : images[i]; };
  std::vector<std::vector<Feature>> feats(m);
  for (int i = 0; i < m; ++i) feats[i] = dense_sample(node_image(i), cfg.step, cfg.support).features;

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> dist(m, std::vector<double>(m, inf));
  std::vector<std::vector<int>> next(m, std::vector<int>(m, -1));
  std::map<std::pair<int, int>, RansacResult> pair_h;
  for (int i = 0; i < m; ++i) {
    dist[i][i] = 0.0;
    next[i][i] = i;
  }
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      if (feats[i].size() < 2 || feats[j].size() < 2) continue;
      const auto matches = distance_ratio_match(feats[i], feats[j], cfg.tau);
      GuidedMatchConfig rc = cfg.ransac;
      rc.rng_seed = detail::stage_seed(cfg.ransac.rng_seed, static_cast<std::uint64_t>(i * 1000 + j));
      try {
        const RansacResult r = ransac_homography(to_correspondences(matches), rc);
        pair_h.emplace(std::pair{i, j}, r);
        dist[i][j] = dist[j][i] = 1.0 / static_cast<double>(r.inlier_count);
        next[i][j] = j;
        next[j][i] = i;
      } catch (const RansacFailure&) {
      }
    }
  }
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        if (dist[i][k] + dist[k][j] < dist[i][j]) {
          dist[i][j] = dist[i][k] + dist[k][j];
          next[i][j] = next[i][k];
        }
      }
    }
  }
  auto edge_h = [&](int a, int b) {
    if (a < b) return pair_h.at({a, b}).homography;
    return pair_h.at({b, a}).homography.inverse();
  };
  std::map<int, BaselineResult> out;
  for (int k = 0; k < n; ++k) {
    BaselineResult r;
    if (const auto it = pair_h.find({k, n}); it != pair_h.end()) r.inliers = it->second.inlier_count;
    if (next[k][n] >= 0) {
      Homography h;
      int cur = k;
      r.path.push_back(k);
      while (cur != n) {
        const int nx = next[cur][n];
        h = compose_homography(edge_h(cur, nx), h);
        cur = nx;
        r.path.push_back(cur == n ? kReference : cur);
      }
      r.homography = h;
    }
    out[k] = std::move(r);
  }
  return out;
}

}  // namespace groupreg
