// groupreg: command-line front end for the registration pipeline.

#include "groupreg/groupreg.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace groupreg;

namespace {

struct ConfigFlags {
  std::string preset;
  std::string config_file;
  std::vector<std::string> overrides;
  int threads = 0;
  long long seed = -1;

  void attach(CLI::App* app) {
    app->add_option("--preset", preset, "Parameter preset (paper or desk)");
    app->add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
    app->add_option("--set", overrides, "Override one key (key=value); repeatable");
    app->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "Random seed")->check(CLI::NonNegativeNumber);
  }

  // Preset, then file, then --set, then dedicated flags.
  PipelineConfig resolve() const {
    PipelineConfig cfg;
    if (!preset.empty()) cfg.set("preset", preset);
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error("--set expects key=value, got " + kv);
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (threads > 0) cfg.threads = threads;
    if (seed >= 0) cfg.rng_seed = static_cast<std::uint64_t>(seed);
    return cfg;
  }
};

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw Error("cannot read " + p.string());
  return is;
}

/// Solution transforms reordered to the group's image order.
GroupSolution solution_for(const ImageGroup& g, const SolutionDocument& doc) {
  std::map<std::string, RigidTransform> by_id;
  for (std::size_t i = 0; i < doc.ids.size(); ++i) by_id[doc.ids[i]] = doc.solution.transforms[i];
  GroupSolution sol = doc.solution;
  sol.transforms.clear();
  for (const std::string& id : g.historical) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw Error("solution has no transform for image " + id);
    sol.transforms.push_back(it->second);
  }
  return sol;
}

ImageGroup ids_only_group(const std::string& reference, const std::vector<std::string>& ids) {
  ImageGroup g;
  g.reference = reference;
  g.historical = ids;
  return g;
}

void report_cache(const CacheStats& s) {
  std::cerr << "cache: features " << s.feature_hits << " hit / " << s.feature_misses << " miss, hough " << s.hough_hits
            << " hit / " << s.hough_misses << " miss\n";
}

// ---------------------------------------------------------------------------

struct SynthFlags {
  std::string out;
  int n = 5;
  int size = 512;
  int ref_size = 0;
  double mpp = 1.0;
  std::uint64_t seed = 1;
  double occlusion = 0.0;
  double noise = 0.0;
  double brightness = 0.0;
  double scale = 1.0;
  double max_translation = 150.0;
  double max_rotation_deg = 180.0;
  int change_image = -1;
  double change_fraction = 0.8;
};

int cmd_synth(const SynthFlags& f) {
  std::mt19937_64 rng(f.seed);
  std::uniform_real_distribution<double> ut(-f.max_translation, f.max_translation);
  std::uniform_real_distribution<double> ug(-deg_to_rad(f.max_rotation_deg), deg_to_rad(f.max_rotation_deg));
  SyntheticSpec spec;
  spec.width = spec.height = f.size;
  spec.ref_width = spec.ref_height = f.ref_size;
  spec.meters_per_px = f.mpp;
  spec.texture_seed = f.seed * 7919u + 13u;
  spec.corruption_seed = f.seed;
  if (f.change_image >= 0) spec.reference_changes.push_back({f.change_image, f.change_fraction, {120.0, 90.0}});
  std::optional<SyntheticScenario> sc;
  for (int attempt = 0; attempt < 100 && !sc; ++attempt) {
    spec.planted.clear();
    spec.corruption.clear();
    for (int k = 0; k < f.n; ++k) {
      spec.planted.emplace_back(ut(rng) * f.mpp, ut(rng) * f.mpp, ug(rng));
      spec.corruption.push_back({f.occlusion, f.brightness, f.noise, f.scale});
    }
    try {
      sc = generate_scenario(spec);
    } catch (const Error&) {
      if (attempt == 99) throw;
    }
  }
  const fs::path dir(f.out);
  fs::create_directories(dir);
  write_png((dir / "reference.png").string(), sc->reference);
  Manifest m;
  m.meters_per_px = f.mpp;
  m.reference = {"reference", "reference.png"};
  for (int k = 0; k < f.n; ++k) {
    const std::string name = sc->ids[k] + ".png";
    write_png((dir / name).string(), sc->historical[k]);
    m.historical.push_back({sc->ids[k], name});
  }
  m.ground_truth = "ground_truth.csv";
  auto gt = open_out(dir / "ground_truth.csv");
  write_ground_truth_csv(gt, sc->ground_truth);
  GroupSolution truth;
  truth.transforms = sc->truth;
  auto tr = open_out(dir / "truth.txt");
  write_solution(tr, ids_only_group("reference", sc->ids), truth);
  auto mf = open_out(dir / "manifest.txt");
  write_manifest(mf, m);
  std::cout << "wrote " << f.n << " historical images to " << dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Groupwise registration of historical images against a reference"};
  app.require_subcommand(1);

  // extract
  ConfigFlags extract_cfg;
  std::string extract_image, extract_out;
  double extract_mpp = 1.0;
  auto* extract = app.add_subcommand("extract", "Dense features of one image");
  extract_cfg.attach(extract);
  extract->add_option("image", extract_image, "Input PNG or PGM")->required()->check(CLI::ExistingFile);
  extract->add_option("-o,--out", extract_out, "Feature file")->required();
  extract->add_option("--mpp", extract_mpp, "Meters per pixel")->check(CLI::PositiveNumber);

  // hough
  ConfigFlags hough_cfg;
  std::string hough_a, hough_b, hough_out, hough_reverse;
  auto* hough = app.add_subcommand("hough", "Hough space of a feature pair (a -> b)");
  hough_cfg.attach(hough);
  hough->add_option("features_a", hough_a)->required()->check(CLI::ExistingFile);
  hough->add_option("features_b", hough_b)->required()->check(CLI::ExistingFile);
  hough->add_option("-o,--out", hough_out, "Space for a -> b")->required();
  hough->add_option("--reverse", hough_reverse, "Also write the space for b -> a");

  // register
  ConfigFlags register_cfg;
  std::string register_manifest, register_out;
  auto* reg = app.add_subcommand("register", "Groupwise rigid registration");
  register_cfg.attach(reg);
  reg->add_option("--manifest", register_manifest)->required()->check(CLI::ExistingFile);
  reg->add_option("-o,--out", register_out, "Solution file")->required();

  // guided
  ConfigFlags guided_cfg;
  std::string guided_manifest, guided_solution, guided_out;
  auto* guided = app.add_subcommand("guided", "Guided matching and homographies along relation paths");
  guided_cfg.attach(guided);
  guided->add_option("--manifest", guided_manifest)->required()->check(CLI::ExistingFile);
  guided->add_option("--solution", guided_solution)->required()->check(CLI::ExistingFile);
  guided->add_option("-o,--out", guided_out, "Registration records")->required();

  // eval
  std::string eval_gt, eval_regs, eval_solution, eval_truth, eval_out;
  auto* eval = app.add_subcommand("eval", "Ground-truth metrics");
  eval->add_option("--gt", eval_gt, "Ground-truth CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--registrations", eval_regs, "Registration records")->check(CLI::ExistingFile);
  eval->add_option("--solution", eval_solution, "Rigid solution")->check(CLI::ExistingFile);
  eval->add_option("--truth", eval_truth, "Planted transforms (solution format)")->check(CLI::ExistingFile);
  eval->add_option("-o,--out", eval_out, "Metrics CSV (stdout when omitted)");

  // synth
  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "Write a synthetic scenario");
  synth->add_option("-o,--out", sf.out, "Output directory")->required();
  synth->add_option("--n", sf.n, "Historical images")->check(CLI::PositiveNumber);
  synth->add_option("--size", sf.size, "Historical image side, pixels")->check(CLI::Range(64, 8192));
  synth->add_option("--ref-size", sf.ref_size, "Reference side, pixels (default: --size)");
  synth->add_option("--mpp", sf.mpp, "Meters per pixel")->check(CLI::PositiveNumber);
  synth->add_option("--seed", sf.seed);
  synth->add_option("--occlusion", sf.occlusion)->check(CLI::Range(0.0, 0.95));
  synth->add_option("--noise", sf.noise)->check(CLI::NonNegativeNumber);
  synth->add_option("--brightness", sf.brightness);
  synth->add_option("--scale", sf.scale, "Scale drift of every image")->check(CLI::Range(0.7, 1.3));
  synth->add_option("--max-translation", sf.max_translation, "Pixels")->check(CLI::NonNegativeNumber);
  synth->add_option("--max-rotation", sf.max_rotation_deg, "Degrees")->check(CLI::Range(0.0, 180.0));
  synth->add_option("--change-image", sf.change_image, "Image whose reference footprint shows a displaced world");
  synth->add_option("--change-fraction", sf.change_fraction)->check(CLI::Range(0.01, 1.0));

  // run
  ConfigFlags run_cfg;
  std::string run_manifest, run_out, run_gt, run_truth;
  int run_runs = 0;
  bool run_mosaic = false;
  auto* run = app.add_subcommand("run", "Full pipeline");
  run_cfg.attach(run);
  run->add_option("--manifest", run_manifest)->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "Output directory")->required();
  run->add_option("--gt", run_gt, "Ground-truth CSV (overrides the manifest)")->check(CLI::ExistingFile);
  run->add_option("--truth", run_truth, "Planted transforms for component errors")->check(CLI::ExistingFile);
  run->add_option("--runs", run_runs, "Repeated solves with consecutive seeds")->check(CLI::PositiveNumber);
  run->add_flag("--mosaic", run_mosaic, "Write a checkerboard mosaic");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*extract) {
      const PipelineConfig cfg = extract_cfg.resolve();
      const ImageGrid img = read_image(extract_image, extract_mpp);
      DenseSampleResult r = dense_sample(img, cfg.feature_step, cfg.feature_support);
      if (!r.warning.empty()) throw StageError("features", r.warning);
      write_features(extract_out, r.features);
      std::cout << r.features.size() << " features\n";
    } else if (*hough) {
      const PipelineConfig cfg = hough_cfg.resolve();
      const MatchSet m = top_k_matches(read_features(hough_a), read_features(hough_b), cfg.top_k);
      write_hough_space(hough_out, build_hough_space(m, cfg.hough));
      if (!hough_reverse.empty()) write_hough_space(hough_reverse, build_hough_space(swap_frames(m), cfg.hough));
      std::cout << m.matches.size() << " matches\n";
    } else if (*reg) {
      const PipelineConfig cfg = register_cfg.resolve();
      const Manifest m = read_manifest_file(register_manifest);
      CacheStats stats;
      const ImageGroup g = build_group(load_inputs(m), cfg, &stats);
      report_cache(stats);
      GroupSolution sol;
      try {
        sol = solve_sequential(g, available_relations(g), cfg.solver_config());
      } catch (const Error& e) {
        throw StageError("groupwise", e.what());
      }
      auto os = open_out(register_out);
      write_solution(os, g, sol);
    } else if (*guided) {
      const PipelineConfig cfg = guided_cfg.resolve();
      const Manifest m = read_manifest_file(guided_manifest);
      const GroupInputs in = load_inputs(m);
      CacheStats stats;
      const ImageGroup g = build_group(in, cfg, &stats);
      report_cache(stats);
      auto is = open_in(guided_solution);
      const GroupSolution sol = solution_for(g, read_solution(is));
      std::map<int, ImageRegistration> regs;
      try {
        regs = register_to_reference(g, sol, in.historical, in.reference, cfg.guided_config(), cfg.guided_enabled);
      } catch (const Error& e) {
        throw StageError("guided", e.what());
      }
      auto os = open_out(guided_out);
      write_registrations(os, g, regs);
    } else if (*eval) {
      if (eval_regs.empty() && eval_solution.empty()) throw Error("eval needs --registrations or --solution");
      auto gis = open_in(eval_gt);
      const GroundTruth gt = read_ground_truth_csv(gis);
      std::map<std::string, Homography> mapping;
      std::map<std::string, RigidTransform> rigid, truth;
      if (!eval_solution.empty()) {
        auto is = open_in(eval_solution);
        const SolutionDocument d = read_solution(is);
        for (std::size_t i = 0; i < d.ids.size(); ++i) rigid[d.ids[i]] = d.solution.transforms[i];
      }
      if (!eval_regs.empty()) {
        auto is = open_in(eval_regs);
        for (const RegistrationRecord& r : read_registrations(is)) mapping.emplace(r.image_id, r.homography);
      }
      if (!eval_truth.empty()) {
        auto is = open_in(eval_truth);
        const SolutionDocument d = read_solution(is);
        for (std::size_t i = 0; i < d.ids.size(); ++i) truth[d.ids[i]] = d.solution.transforms[i];
      }
      std::vector<MetricsRow> rows;
      for (const auto& [id, pairs] : gt) {
        MetricsRow row;
        row.image_id = id;
        if (const auto it = mapping.find(id); it != mapping.end()) {
          row.rmse_m = rmse(pairs, [&](Point2 p) { return it->second.apply(p); });
        } else if (const auto jt = rigid.find(id); jt != rigid.end()) {
          row.rmse_m = rmse(pairs, [&](Point2 p) { return apply_rigid(jt->second, p); });
        } else {
          throw StageError("eval", "no registration for image " + id);
        }
        if (rigid.count(id) && truth.count(id)) {
          const ComponentErrors e = rigid_component_errors(rigid.at(id), truth.at(id));
          row.trans_err_m = e.translation_m;
          row.rot_err_deg = e.rotation_deg;
        }
        rows.push_back(row);
      }
      if (eval_out.empty()) {
        write_metrics_csv(std::cout, rows);
      } else {
        auto os = open_out(eval_out);
        write_metrics_csv(os, rows);
      }
    } else if (*synth) {
      return cmd_synth(sf);
    } else if (*run) {
      PipelineConfig cfg = run_cfg.resolve();
      if (run_runs > 0) cfg.runs = run_runs;
      const Manifest m = read_manifest_file(run_manifest);
      const GroupInputs in = load_inputs(m);
      std::optional<GroundTruth> gt;
      const std::optional<fs::path> gt_path = run_gt.empty() ? m.ground_truth : std::optional<fs::path>(run_gt);
      if (gt_path) {
        auto is = open_in(*gt_path);
        gt = read_ground_truth_csv(is);
      }
      std::optional<std::vector<RigidTransform>> truth;
      if (!run_truth.empty()) {
        auto is = open_in(run_truth);
        truth = solution_for(ids_only_group("", in.ids), read_solution(is)).transforms;
      }
      const PipelineResult res = run_pipeline(in, cfg, gt ? &*gt : nullptr, truth ? &*truth : nullptr);
      report_cache(res.cache);
      const fs::path out(run_out);
      fs::create_directories(out);
      {
        auto os = open_out(out / "config.txt");
        cfg.dump(os);
      }
      {
        auto os = open_out(out / "solution.txt");
        write_solution(os, res.group, res.solution);
      }
      {
        auto os = open_out(out / "registrations.txt");
        write_registrations(os, res.group, res.registrations);
      }
      {
        auto os = open_out(out / "timings.csv");
        write_timings(os, res);
      }
      if (gt) {
        auto os = open_out(out / "metrics.csv");
        write_metrics_csv(os, res.metrics);
        write_metrics_csv(std::cout, res.metrics);
      }
      if (res.run_summary) {
        auto os = open_out(out / "runs.csv");
        write_run_summary(os, res.group, *res.run_summary);
        write_run_summary(std::cout, res.group, *res.run_summary);
      }
      if (run_mosaic) {
        std::vector<Homography> h;
        for (int k = 0; k < res.group.size(); ++k) h.push_back(res.registrations.at(k).homography);
        write_png((out / "mosaic.png").string(), make_mosaic(in.reference, in.historical, h));
      }
      for (const auto& [k, r] : res.registrations) {
        if (r.status == RegistrationStatus::Flagged) {
          std::cerr << "warning: " << res.group.historical[k] << " kept a rigid edge (guided matching failed)\n";
        }
      }
    }
  } catch (const StageError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
