#include "groupreg/eval.hpp"
#include "groupreg/pipeline.hpp"
#include "groupreg/synthetic.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

namespace groupreg {
namespace {

Point2 identity_map(Point2 p) { return p; }

TEST(Rmse, ExactMappingIsZero) {
  const std::vector<GtPair> gt{{{1, 2}, {1, 2}}, {{-5, 3}, {-5, 3}}};
  EXPECT_EQ(rmse(gt, identity_map), 0.0);
}

TEST(Rmse, HandComputedValues) {
  EXPECT_EQ(rmse({{{0, 0}, {3, 4}}}, identity_map), 5.0);
  EXPECT_DOUBLE_EQ(rmse({{{0, 0}, {0, 0}}, {{1, 1}, {1, 3}}}, identity_map), std::sqrt(2.0));
  EXPECT_THROW(rmse({}, identity_map), Error);
}

TEST(Rmse, NonnegativeAndZeroOnlyWhenAllCoincide) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int t = 0; t < 100; ++t) {
    std::vector<GtPair> gt;
    for (int i = 0; i < 6; ++i) {
      const Point2 p{u(rng), u(rng)};
      gt.push_back({p, p});
    }
    EXPECT_EQ(rmse(gt, identity_map), 0.0);
    gt[t % 6].opm.x += 1e-3;
    EXPECT_GT(rmse(gt, identity_map), 0.0);
  }
}

TEST(ComponentErrors, HandComputedValues) {
  const auto same = rigid_component_errors({1, 2, 0.3}, {1, 2, 0.3});
  EXPECT_EQ(same.translation_m, 0.0);
  EXPECT_EQ(same.rotation_deg, 0.0);
  const auto wrap = rigid_component_errors({0, 0, deg_to_rad(359.0)}, {0, 0, deg_to_rad(1.0)});
  EXPECT_NEAR(wrap.rotation_deg, 2.0, 1e-9);
  EXPECT_EQ(rigid_component_errors({0, 0, 0}, {3, 4, 0}).translation_m, 5.0);
}

TEST(ComponentErrors, RotationErrorIsSymmetric) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int t = 0; t < 200; ++t) {
    const RigidTransform a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng));
    EXPECT_DOUBLE_EQ(rigid_component_errors(a, b).rotation_deg, rigid_component_errors(b, a).rotation_deg);
    EXPECT_LE(rigid_component_errors(a, b).rotation_deg, 180.0 + 1e-12);
  }
}

TEST(InlierRatio, HandComputedValues) {
  std::vector<Correspondence> exact{{{0, 0}, {0, 0}}, {{5, 5}, {5, 5}}};
  EXPECT_EQ(inlier_ratio(exact, identity_map, 0.0), 1.0);

  std::vector<Correspondence> planted;
  for (int i = 0; i < 10; ++i) planted.push_back({{10.0 * i, 0}, {10.0 * i + 20.0, 0}});
  for (int i = 0; i < 90; ++i) planted.push_back({{10.0 * i, 0}, {10.0 * i, 500.0}});
  EXPECT_EQ(inlier_ratio(planted, identity_map, 50.0), 0.10);
  EXPECT_THROW(inlier_ratio({}, identity_map, 1.0), Error);
}

TEST(InlierRatio, ZeroThresholdOnNoisyData) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Correspondence> m;
  for (int i = 0; i < 50; ++i) m.push_back({{1.0 * i, 0}, {i + n(rng), n(rng)}});
  EXPECT_EQ(inlier_ratio(m, identity_map, 0.0), 0.0);
}

TEST(InlierRatio, MonotoneInGroundDistance) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-300, 300);
  std::vector<Correspondence> m;
  for (int i = 0; i < 400; ++i) m.push_back({{u(rng), u(rng)}, {u(rng), u(rng)}});
  double prev = 0.0;
  for (int k = 0; k < 20; ++k) {
    const double r = inlier_ratio(m, identity_map, 25.0 * k);
    EXPECT_GE(r, prev);
    prev = r;
  }
}

TEST(GroundTruthCsv, RoundTrip) {
  GroundTruth gt;
  gt["h0"] = {{{1.5, -2.25}, {100.125, 3.0}}, {{0, 0}, {-7, 8}}};
  gt["h1"] = {{{0.1, 0.2}, {0.3, 0.4}}};
  std::stringstream ss;
  write_ground_truth_csv(ss, gt);
  const GroundTruth back = read_ground_truth_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  for (const auto& [id, pairs] : gt) {
    ASSERT_EQ(back.at(id).size(), pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      EXPECT_EQ(back.at(id)[i].hist.x, pairs[i].hist.x);
      EXPECT_EQ(back.at(id)[i].opm.y, pairs[i].opm.y);
    }
  }
}

TEST(GroundTruthCsv, RejectsBadHeadersAndRows) {
  std::stringstream a("image_id,x,y\n");
  EXPECT_THROW(read_ground_truth_csv(a), Error);
  std::stringstream b("image_id,x_hist,y_hist,x_opm,y_opm\nh0,1,2,three,4\n");
  EXPECT_THROW(read_ground_truth_csv(b), Error);
  std::stringstream c("");
  EXPECT_THROW(read_ground_truth_csv(c), Error);
}

TEST(MetricsCsv, HeaderAndRows) {
  std::stringstream ss;
  write_metrics_csv(ss, {{"h0", 1.5, 0.25, 0.5}});
  EXPECT_EQ(ss.str(), "image_id,rmse_m,trans_err_m,rot_err_deg\nh0,1.5,0.25,0.5\n");
}

BaselineConfig desk_baseline() {
  BaselineConfig cfg;
  cfg.step = 8.0;
  cfg.support = 48.0;
  return cfg;
}

TEST(TopologyBaseline, SinglePairUsesDirectPath) {
  const WorldTexture world(5);
  const RigidTransform truth(30.0, -20.0, deg_to_rad(40.0));
  const ImageGrid ref = render_view(world, 320, 320, 1.0, {}, 1.0);
  const ImageGrid hist = render_view(world, 256, 256, 1.0, truth, 1.0);
  const auto res = topology_baseline({hist}, ref, desk_baseline());
  ASSERT_TRUE(res.at(0).homography.has_value());
  EXPECT_EQ(res.at(0).path, (std::vector<int>{0, kReference}));
  for (const Point2 p : {Point2{0, 0}, Point2{-100, 90}, Point2{110, -80}}) {
    EXPECT_LT(distance(res.at(0).homography->apply(p), apply_rigid(truth, p)), 2.0);
  }
}

TEST(TopologyBaseline, AgreesWithGroupwiseOnEasyGroup) {
  SyntheticSpec spec;
  spec.width = spec.height = 320;
  spec.texture_seed = 17;
  spec.planted = {{0, 0, deg_to_rad(30)}, {60, -40, deg_to_rad(-70)}, {-50, 55, deg_to_rad(150)}};
  const SyntheticScenario sc = generate_scenario(spec);
  PipelineConfig cfg = PipelineConfig::desk();
  const ImageGroup g = build_group({sc.reference, "ref", sc.historical, sc.ids}, cfg);
  const GroupSolution sol = solve_sequential(g, available_relations(g), cfg.solver_config());
  const auto base = topology_baseline(sc.historical, sc.reference, desk_baseline());
  for (int k = 0; k < 3; ++k) {
    ASSERT_TRUE(base.at(k).homography.has_value());
    const auto& gt = sc.ground_truth.at(sc.ids[k]);
    const double rb = rmse(gt, [&](Point2 p) { return base.at(k).homography->apply(p); });
    const double rg = rmse(gt, [&](Point2 p) { return apply_rigid(sol.transforms[k], p); });
    EXPECT_LT(rb, 5.0) << k;
    EXPECT_LT(rg, 5.0) << k;
  }
}

}  // namespace
}  // namespace groupreg
