#pragma once

// End-to-end orchestration: configuration, feature and Hough caching,
// group construction, solving, guided registration, metrics and mosaics.

#include "groupreg/eval.hpp"
#include "groupreg/features.hpp"
#include "groupreg/groupwise.hpp"
#include "groupreg/guided.hpp"
#include "groupreg/hough.hpp"
#include "groupreg/image.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace groupreg {

inline constexpr const char* kCacheEnv = "GROUPREG_CACHE_DIR";

struct PipelineConfig {
  double meters_per_px = 1.0;
  double feature_step = 40.0;
  double feature_support = 240.0;
  double ratio_tau = 0.7;
  std::size_t top_k = 100000;
  HoughParams hough;
  PsoConfig pso;
  SolverConfig solver;
  GuidedMatchConfig guided;
  bool guided_enabled = true;
  std::uint64_t rng_seed = 1;
  int runs = 1;
  int threads = 1;

  /// Desk-scale preset for images of a few hundred pixels at 1 m/px.
  static PipelineConfig desk() {
    PipelineConfig c;
    c.feature_step = 8.0;
    c.feature_support = 48.0;
    c.top_k = 20000;
    c.hough.zoning_cell = 32.0;
    c.hough.extent = Extent::symmetric(400.0);
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    auto num = [&] {
      try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw Error("");
        return v;
      } catch (const std::exception&) {
        throw Error("config value for " + key + " is not a number: " + value);
      }
    };
    auto flag = [&] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw Error("config value for " + key + " is not a boolean: " + value);
    };
    if (key == "preset") {
      if (value == "desk") {
        *this = desk();
      } else if (value == "paper") {
        *this = PipelineConfig{};
      } else {
        throw Error("unknown preset: " + value);
      }
    } else if (key == "meters_per_px") meters_per_px = num();
    else if (key == "feature.step") feature_step = num();
    else if (key == "feature.support") feature_support = num();
    else if (key == "feature.tau") ratio_tau = num();
    else if (key == "hough.top_k") top_k = static_cast<std::size_t>(num());
    else if (key == "hough.trans_bin") hough.trans_bin = num();
    else if (key == "hough.rot_bins") hough.rot_bins = static_cast<int>(num());
    else if (key == "hough.sigma_t") hough.sigma_t = num();
    else if (key == "hough.truncation") hough.truncation = num();
    else if (key == "hough.zoning") hough.zoning_cell = num();
    else if (key == "hough.extent") hough.extent = Extent::symmetric(num());
    else if (key == "pso.particles") pso.particle_count = static_cast<int>(num());
    else if (key == "pso.max_iters") pso.max_iters = static_cast<int>(num());
    else if (key == "pso.inertia") pso.inertia = num();
    else if (key == "pso.cognitive") pso.cognitive = num();
    else if (key == "pso.social") pso.social = num();
    else if (key == "pso.stall_iters") pso.stall_iters = static_cast<int>(num());
    else if (key == "pso.stall_tolerance") pso.stall_tolerance = num();
    else if (key == "solver.randomize_fraction") solver.randomize_fraction = num();
    else if (key == "solver.translation_jitter") solver.translation_jitter = num();
    else if (key == "solver.reference_particles") solver.reference_particles = static_cast<int>(num());
    else if (key == "guided.enabled") guided_enabled = flag();
    else if (key == "guided.position_threshold") guided.position_threshold = num();
    else if (key == "guided.scale_ratio_max") guided.scale_ratio_max = num();
    else if (key == "guided.ransac_iters") guided.ransac_iters = static_cast<int>(num());
    else if (key == "guided.ransac_threshold") guided.ransac_inlier_threshold = num();
    else if (key == "guided.ransac_min_inliers") guided.ransac_min_inliers = static_cast<int>(num());
    else if (key == "seed") rng_seed = static_cast<std::uint64_t>(num());
    else if (key == "runs") runs = static_cast<int>(num());
    else if (key == "threads") threads = static_cast<int>(num());
    else throw Error("unknown config key: " + key);
  }

  /// `key = value` lines; `#` starts a comment.
  void load(std::istream& is) {
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
      const auto eq = line.find('=');
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      if (trim(line).empty()) continue;
      if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + " has no '='");
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  void load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read config " + path);
    load(is);
  }

  /// Solver settings with the top-level seed and worker count applied.
  SolverConfig solver_config() const {
    SolverConfig s = solver;
    s.pso = pso;
    s.pso.rng_seed = rng_seed;
    s.pso.threads = threads;
    return s;
  }
  GuidedMatchConfig guided_config() const {
    GuidedMatchConfig g = guided;
    g.rng_seed = rng_seed;
    g.threads = threads;
    return g;
  }

  void dump(std::ostream& os) const {
    os << std::setprecision(17);
    os << "meters_per_px = " << meters_per_px << "\nfeature.step = " << feature_step
       << "\nfeature.support = " << feature_support << "\nfeature.tau = " << ratio_tau << "\nhough.top_k = " << top_k
       << "\nhough.trans_bin = " << hough.trans_bin << "\nhough.rot_bins = " << hough.rot_bins
       << "\nhough.sigma_t = " << hough.sigma_t << "\nhough.truncation = " << hough.truncation
       << "\nhough.zoning = " << hough.zoning_cell << "\nhough.extent = " << hough.extent.max_x
       << "\npso.particles = " << pso.particle_count << "\npso.max_iters = " << pso.max_iters
       << "\npso.inertia = " << pso.inertia << "\npso.cognitive = " << pso.cognitive << "\npso.social = " << pso.social
       << "\npso.stall_iters = " << pso.stall_iters << "\npso.stall_tolerance = " << pso.stall_tolerance
       << "\nsolver.randomize_fraction = " << solver.randomize_fraction
       << "\nsolver.translation_jitter = " << solver.translation_jitter
       << "\nsolver.reference_particles = " << solver.reference_particles
       << "\nguided.enabled = " << (guided_enabled ? "true" : "false")
       << "\nguided.position_threshold = " << guided.position_threshold
       << "\nguided.scale_ratio_max = " << guided.scale_ratio_max << "\nguided.ransac_iters = " << guided.ransac_iters
       << "\nguided.ransac_threshold = " << guided.ransac_inlier_threshold
       << "\nguided.ransac_min_inliers = " << guided.ransac_min_inliers << "\nseed = " << rng_seed
       << "\nruns = " << runs << "\nthreads = " << threads << '\n';
  }
};

/// Error tagged with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what) : Error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// ---------------------------------------------------------------------------
// Caching

inline std::optional<std::filesystem::path> cache_dir_from_env() {
  const char* v = std::getenv(kCacheEnv);
  if (!v || !*v) return std::nullopt;
  std::filesystem::path p(v);
  std::filesystem::create_directories(p);
  return p;
}

class Fingerprint {
 public:
  Fingerprint& add(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  template <typename T>
  Fingerprint& add(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    return add(&v, sizeof v);
  }
  Fingerprint& add(const ImageGrid& img) {
    add(img.width()).add(img.height()).add(img.meters_per_px());
    return add(img.pixels().data(), img.pixels().size() * sizeof(float));
  }
  std::string hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h_;
    return os.str();
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline Fingerprint hough_fingerprint(const PipelineConfig& cfg) {
  Fingerprint f;
  const HoughParams& p = cfg.hough;
  f.add(cfg.top_k).add(p.trans_bin).add(p.rot_bins).add(p.sigma_t).add(p.truncation).add(p.zoning_cell);
  f.add(p.extent.min_x).add(p.extent.max_x).add(p.extent.min_y).add(p.extent.max_y);
  return f;
}

struct CacheStats {
  std::size_t feature_hits = 0, feature_misses = 0;
  std::size_t hough_hits = 0, hough_misses = 0;
};

inline std::vector<Feature> extract_features(const ImageGrid& img, const PipelineConfig& cfg,
                                             const std::optional<std::filesystem::path>& cache, CacheStats* stats = nullptr,
                                             std::string* key_out = nullptr) {
  Fingerprint f;
  f.add(img).add(cfg.feature_step).add(cfg.feature_support);
  const std::string key = f.hex();
  if (key_out) *key_out = key;
  if (cache) {
    const auto path = *cache / ("features_" + key + ".bin");
    if (std::filesystem::exists(path)) {
      if (stats) ++stats->feature_hits;
      return read_features(path.string());
    }
  }
  DenseSampleResult r = dense_sample(img, cfg.feature_step, cfg.feature_support);
  if (!r.warning.empty()) throw Error(r.warning);
  if (cache) write_features((*cache / ("features_" + key + ".bin")).string(), r.features);
  if (stats) ++stats->feature_misses;
  return std::move(r.features);
}

inline MatchSet swap_frames(const MatchSet& m) {
  MatchSet out = m;
  for (Match& x : out.matches) {
    std::swap(x.frame_a, x.frame_b);
    std::swap(x.index_a, x.index_b);
  }
  std::sort(out.matches.begin(), out.matches.end(), detail::match_order);
  return out;
}

// ---------------------------------------------------------------------------
// Group construction

struct GroupInputs {
  ImageGrid reference;
  std::string reference_id = "reference";
  std::vector<ImageGrid> historical;
  std::vector<std::string> ids;
};

/// Dense features for every image, top-K matching per unordered pair and
/// Hough spaces for both directions of each pair. Historical pairs without
/// any vote inside the extent get no space.
inline ImageGroup build_group(const GroupInputs& in, const PipelineConfig& cfg, CacheStats* stats = nullptr) {
  const int n = static_cast<int>(in.historical.size());
  if (n < 1) throw StageError("features", "no historical images");
  const auto cache = cache_dir_from_env();
  ImageGroup g;
  g.reference = in.reference_id;
  g.historical = in.ids;
  g.params = cfg.hough;

  std::vector<std::vector<Feature>> feats(n + 1);
  std::vector<std::string> keys(n + 1);
  try {
    for (int k = 0; k < n; ++k) feats[k] = extract_features(in.historical[k], cfg, cache, stats, &keys[k]);
    feats[n] = extract_features(in.reference, cfg, cache, stats, &keys[n]);
  } catch (const Error& e) {
    throw StageError("features", e.what());
  }

  std::vector<std::pair<int, int>> pairs;
  for (int k = 0; k < n; ++k) {
    pairs.push_back({k, kReference});
    for (int l = k + 1; l < n; ++l) pairs.push_back({k, l});
  }
  const std::string hkey = hough_fingerprint(cfg).hex();
  std::vector<std::pair<HoughSpace, HoughSpace>> spaces(pairs.size());
  std::vector<std::string> errors(pairs.size());
  std::vector<int> hit(pairs.size(), 0), empty(pairs.size(), 0);
  auto node = [&](int k) { return k == kReference ? n : k; };
  auto work = [&](std::size_t i) {
    const auto [a, b] = pairs[i];
    try {
      std::optional<std::filesystem::path> fwd, bwd;
      if (cache) {
        fwd = *cache / ("hough_" + keys[node(a)] + "_" + keys[node(b)] + "_" + hkey + ".bin");
        bwd = *cache / ("hough_" + keys[node(b)] + "_" + keys[node(a)] + "_" + hkey + ".bin");
        if (std::filesystem::exists(*fwd) && std::filesystem::exists(*bwd)) {
          spaces[i] = {read_hough_space(fwd->string()), read_hough_space(bwd->string())};
          hit[i] = 1;
          return;
        }
      }
      const MatchSet m = top_k_matches(feats[node(a)], feats[node(b)], cfg.top_k);
      spaces[i] = {build_hough_space(m, cfg.hough), build_hough_space(swap_frames(m), cfg.hough)};
      if (cache) {
        write_hough_space(fwd->string(), spaces[i].first);
        write_hough_space(bwd->string(), spaces[i].second);
      }
    } catch (const EmptyEstimatorError& e) {
      if (b == kReference) errors[i] = e.what();
      else empty[i] = 1;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  const int workers = std::max(1, std::min<int>(cfg.threads, static_cast<int>(pairs.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < pairs.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < pairs.size(); i += static_cast<std::size_t>(workers)) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [a, b] = pairs[i];
    if (!errors[i].empty()) {
      throw StageError("hough", "pair (" + std::to_string(a) + ", " + std::to_string(b) + "): " + errors[i]);
    }
    if (empty[i]) continue;  // no votes inside the extent: the relation is left out
    if (stats) (hit[i] ? stats->hough_hits : stats->hough_misses) += 1;
    g.spaces[{a, b}] = std::move(spaces[i].first);
    g.spaces[{b, a}] = std::move(spaces[i].second);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Manifest: one entry per line,
//   meters_per_px <value>
//   reference <id> <path>
//   historical <id> <path>
//   ground_truth <path>
// Relative paths are resolved against the manifest's directory.

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;
};

struct Manifest {
  double meters_per_px = 1.0;
  ManifestEntry reference;
  std::vector<ManifestEntry> historical;
  std::optional<std::filesystem::path> ground_truth;
};

inline Manifest read_manifest(std::istream& is, const std::filesystem::path& base = {}) {
  Manifest m;
  bool has_reference = false;
  std::string line;
  int lineno = 0;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    auto fail = [&] { return Error("manifest line " + std::to_string(lineno) + " is malformed"); };
    if (tag == "meters_per_px") {
      if (!(ls >> m.meters_per_px) || !(m.meters_per_px > 0.0)) throw fail();
    } else if (tag == "reference" || tag == "historical") {
      ManifestEntry e;
      std::string path;
      if (!(ls >> e.id >> path)) throw fail();
      e.path = resolve(path);
      if (tag == "reference") {
        if (has_reference) throw Error("manifest names more than one reference");
        m.reference = e;
        has_reference = true;
      } else {
        m.historical.push_back(e);
      }
    } else if (tag == "ground_truth") {
      std::string path;
      if (!(ls >> path)) throw fail();
      m.ground_truth = resolve(path);
    } else {
      throw Error("unknown manifest entry: " + tag);
    }
  }
  if (!has_reference) throw Error("manifest has no reference");
  if (m.historical.empty()) throw Error("manifest has no historical images");
  return m;
}

inline Manifest read_manifest_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read manifest " + path.string());
  return read_manifest(is, path.parent_path());
}

inline void write_manifest(std::ostream& os, const Manifest& m) {
  os << "meters_per_px " << std::setprecision(17) << m.meters_per_px << '\n';
  os << "reference " << m.reference.id << ' ' << m.reference.path.string() << '\n';
  for (const ManifestEntry& e : m.historical) os << "historical " << e.id << ' ' << e.path.string() << '\n';
  if (m.ground_truth) os << "ground_truth " << m.ground_truth->string() << '\n';
}

inline GroupInputs load_inputs(const Manifest& m) {
  GroupInputs in;
  in.reference = read_image(m.reference.path.string(), m.meters_per_px);
  in.reference_id = m.reference.id;
  for (const ManifestEntry& e : m.historical) {
    in.historical.push_back(read_image(e.path.string(), m.meters_per_px));
    in.ids.push_back(e.id);
  }
  return in;
}

// ---------------------------------------------------------------------------
// Mosaic

/// Historical images warped into the reference frame, blended with the
/// reference in a checkerboard of `cell` pixels.
inline ImageGrid make_mosaic(const ImageGrid& reference, const std::vector<ImageGrid>& images,
                             const std::vector<Homography>& to_reference, int cell = 64) {
  ImageGrid out = reference;
  std::vector<Homography> inv;
  for (const Homography& h : to_reference) inv.push_back(h.inverse());
  for (int r = 0; r < out.height(); ++r) {
    for (int c = 0; c < out.width(); ++c) {
      if (((c / cell) + (r / cell)) % 2 == 0) continue;
      const Point2 q = out.to_metric(c, r);
      for (std::size_t k = 0; k < images.size(); ++k) {
        const Point2 px = images[k].to_pixel(inv[k].apply(q));
        if (px.x < 0 || px.y < 0 || px.x > images[k].width() - 1 || px.y > images[k].height() - 1) continue;
        out.at(c, r) = images[k].sample(px.x, px.y, 0.0f);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full run

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunSummary {
  std::vector<RigidTransform> mean;  ///< circular mean for rotations
  std::vector<double> std_translation_m;
  std::vector<double> std_rotation_deg;
};

struct PipelineResult {
  ImageGroup group;
  GroupSolution solution;
  std::map<int, ImageRegistration> registrations;
  std::vector<MetricsRow> metrics;
  std::vector<StageTiming> timings;
  std::vector<GroupSolution> runs;  ///< one per seed when runs > 1
  std::optional<RunSummary> run_summary;
  CacheStats cache;
};

/// Per-image spread of transforms over repeated solutions: standard
/// deviation of translations (root of summed per-axis variances) and of
/// wrapped rotation differences to the circular mean.
inline RunSummary summarize_runs(const std::vector<GroupSolution>& runs) {
  RunSummary s;
  if (runs.empty()) return s;
  const std::size_t n = runs.front().transforms.size();
  for (std::size_t k = 0; k < n; ++k) {
    double mx = 0, my = 0, sx = 0, sy = 0;
    for (const auto& r : runs) {
      mx += r.transforms[k].vx();
      my += r.transforms[k].vy();
      sx += std::sin(r.transforms[k].gamma());
      sy += std::cos(r.transforms[k].gamma());
    }
    const double m = static_cast<double>(runs.size());
    mx /= m;
    my /= m;
    const double mg = std::atan2(sx, sy);
    double vt = 0, vr = 0;
    for (const auto& r : runs) {
      vt += (r.transforms[k].vx() - mx) * (r.transforms[k].vx() - mx) + (r.transforms[k].vy() - my) * (r.transforms[k].vy() - my);
      const double d = rad_to_deg(angle_diff(r.transforms[k].gamma(), mg));
      vr += d * d;
    }
    s.mean.emplace_back(mx, my, mg);
    s.std_translation_m.push_back(std::sqrt(vt / m));
    s.std_rotation_deg.push_back(std::sqrt(vr / m));
  }
  return s;
}

inline std::vector<MetricsRow> compute_metrics(const ImageGroup& group, const GroundTruth& gt,
                                               const std::map<int, Homography>& mapping,
                                               const std::vector<RigidTransform>& rigid,
                                               const std::vector<RigidTransform>* truth = nullptr) {
  std::vector<MetricsRow> rows;
  for (int k = 0; k < group.size(); ++k) {
    const auto it = gt.find(group.historical[k]);
    if (it == gt.end()) continue;
    MetricsRow r;
    r.image_id = group.historical[k];
    const Homography h = mapping.count(k) ? mapping.at(k) : rigid_to_homography(rigid[k]);
    r.rmse_m = rmse(it->second, [&](Point2 p) { return h.apply(p); });
    if (truth) {
      const ComponentErrors e = rigid_component_errors(rigid[k], (*truth)[k]);
      r.trans_err_m = e.translation_m;
      r.rot_err_deg = e.rotation_deg;
    }
    rows.push_back(r);
  }
  return rows;
}

/// Runs features -> hough -> groupwise -> guided -> eval. `truth`, when
/// given, adds rigid component errors to the metrics.
inline PipelineResult run_pipeline(const GroupInputs& in, const PipelineConfig& cfg, const GroundTruth* gt = nullptr,
                                   const std::vector<RigidTransform>* truth = nullptr) {
  PipelineResult res;
  auto t0 = std::chrono::steady_clock::now();
  auto lap = [&](const std::string& stage) {
    const auto now = std::chrono::steady_clock::now();
    res.timings.push_back({stage, std::chrono::duration<double>(now - t0).count()});
    t0 = now;
  };
  res.group = build_group(in, cfg, &res.cache);
  lap("features+hough");
  const RelationMask mask = available_relations(res.group);
  try {
    const int runs = std::max(1, cfg.runs);
    for (int r = 0; r < runs; ++r) {
      PipelineConfig rc = cfg;
      rc.rng_seed = cfg.rng_seed + static_cast<std::uint64_t>(r);
      GroupSolution s = solve_sequential(res.group, mask, rc.solver_config());
      if (r == 0) res.solution = s;
      if (runs > 1) res.runs.push_back(std::move(s));
    }
    if (runs > 1) res.run_summary = summarize_runs(res.runs);
  } catch (const Error& e) {
    throw StageError("groupwise", e.what());
  }
  lap("groupwise");
  try {
    res.registrations = register_to_reference(res.group, res.solution, in.historical, in.reference, cfg.guided_config(),
                                              cfg.guided_enabled);
  } catch (const Error& e) {
    throw StageError("guided", e.what());
  }
  lap("guided");
  if (gt) {
    std::map<int, Homography> h;
    for (const auto& [k, r] : res.registrations) h.emplace(k, r.homography);
    try {
      res.metrics = compute_metrics(res.group, *gt, h, res.solution.transforms, truth);
    } catch (const Error& e) {
      throw StageError("eval", e.what());
    }
  }
  lap("eval");
  return res;
}

inline void write_timings(std::ostream& os, const PipelineResult& r) {
  os << "stage,seconds\n";
  for (const StageRecord& s : r.solution.stage_trace) os << "solver." << s.name << ',' << s.seconds << '\n';
  for (const StageTiming& t : r.timings) os << t.stage << ',' << t.seconds << '\n';
}

inline void write_run_summary(std::ostream& os, const ImageGroup& g, const RunSummary& s) {
  os << std::setprecision(10);
  os << "image_id,mean_vx,mean_vy,mean_gamma_deg,std_translation_m,std_rotation_deg\n";
  for (std::size_t k = 0; k < s.mean.size(); ++k) {
    os << g.historical[k] << ',' << s.mean[k].vx() << ',' << s.mean[k].vy() << ',' << rad_to_deg(s.mean[k].gamma()) << ','
       << s.std_translation_m[k] << ',' << s.std_rotation_deg[k] << '\n';
  }
}

}  // namespace groupreg
