#include "groupreg/pso.hpp"

#include <gtest/gtest.h>

#include <numbers>

namespace groupreg {
namespace {

TEST(Pso, ConstantObjectiveReturnsInitialBest) {
  PsoConfig cfg;
  cfg.particle_count = 10;
  const std::vector<Bound> b{{-1, 1, false}, {0, 1, true}};
  const PsoResult r = pso_minimize([](const std::vector<double>&) { return 3.0; }, b, {{0.25, 0.5}}, cfg);
  EXPECT_EQ(r.value, 3.0);
  EXPECT_EQ(r.position, (std::vector<double>{0.25, 0.5}));
  EXPECT_LE(r.iterations, cfg.stall_iters + 1);
}

TEST(Pso, FindsSphereMinimum) {
  PsoConfig cfg;
  cfg.particle_count = 40;
  cfg.stall_iters = 0;
  const std::vector<Bound> b(2, Bound{-10, 10, false});
  const PsoResult r = pso_minimize(
      [](const std::vector<double>& x) { return (x[0] - 3) * (x[0] - 3) + (x[1] + 2) * (x[1] + 2); }, b, {}, cfg);
  EXPECT_NEAR(r.position[0], 3.0, 1e-3);
  EXPECT_NEAR(r.position[1], -2.0, 1e-3);
}

TEST(Pso, PeriodicDimensionWrapsAcrossSeam) {
  PsoConfig cfg;
  cfg.particle_count = 20;
  const std::vector<Bound> b{{0, 2 * std::numbers::pi, true}};
  auto f = [](const std::vector<double>& x) { return 1.0 - std::cos(x[0] - 0.05); };
  const PsoResult r = pso_minimize(f, b, {{6.2}}, cfg);
  EXPECT_NEAR(std::remainder(r.position[0] - 0.05, 2 * std::numbers::pi), 0.0, 1e-3);
  EXPECT_GE(r.position[0], 0.0);
  EXPECT_LT(r.position[0], 2 * std::numbers::pi);
}

TEST(Pso, DeterministicForSeedAndThreadCount) {
  const std::vector<Bound> b(3, Bound{-5, 5, false});
  auto f = [](const std::vector<double>& x) { return std::abs(x[0]) + x[1] * x[1] + std::sin(x[2]); };
  PsoConfig cfg;
  cfg.particle_count = 30;
  cfg.max_iters = 50;
  const PsoResult a = pso_minimize(f, b, {}, cfg);
  cfg.threads = 3;
  const PsoResult c = pso_minimize(f, b, {}, cfg);
  EXPECT_EQ(a.position, c.position);
  EXPECT_EQ(a.value, c.value);
  cfg.rng_seed = 99;
  EXPECT_NE(pso_minimize(f, b, {}, cfg).position, a.position);
}

TEST(Pso, RejectsInvalidConfig) {
  PsoConfig cfg;
  cfg.particle_count = 0;
  EXPECT_THROW(pso_minimize([](const std::vector<double>&) { return 0.0; }, {{0, 1, false}}, {}, cfg), Error);
  EXPECT_THROW(pso_minimize([](const std::vector<double>&) { return 0.0; }, {{1, 1, false}}, {}, PsoConfig{}), Error);
}

}  // namespace
}  // namespace groupreg
