#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "sparsevb/errors.hpp"
#include "sparsevb/harness.hpp"

using namespace sparsevb;

namespace {

nlohmann::json minimal_config() {
  return nlohmann::json::parse(R"({
    "seed": 5,
    "target": {"family": "cusp", "beta": 1.0, "center": [0.1]},
    "n_grid": [16, 32, 64, 128],
    "architecture": {"source": "explicit", "S": 3, "L": 3, "D": 2},
    "train": {"iterations": 20, "n_samples": 4, "eval_samples": 16},
    "gen_error": {"n_theta": 4, "n_x": 64}
  })");
}

}  // namespace

TEST(TargetFunction, FamilyValues) {
  const double x[] = {0.5};
  EXPECT_NEAR(TargetFunction::cusp(1.0, {0.2})(x), 0.3, 1e-15);
  EXPECT_NEAR(TargetFunction::cusp(0.5, {0.25})(x), 0.5, 1e-15);
  const double y[] = {0.25};
  EXPECT_NEAR(TargetFunction::smoothed_cusp(1.5, {0.0})(y), 0.125 / 1.5, 1e-15);
  const double z[] = {-0.25};
  EXPECT_NEAR(TargetFunction::smoothed_cusp(1.5, {0.0})(z), -0.125 / 1.5, 1e-15);
  const double w[] = {0.25, 0.5};
  EXPECT_NEAR(TargetFunction::trigonometric({1.0, 0.5})(w), std::sin(M_PI * 0.5), 1e-15);
  EXPECT_THROW(TargetFunction::cusp(1.5, {0.0}), std::invalid_argument);
}

TEST(TargetFunction, NetworkMatchesForward) {
  const Architecture a(1, 3, 1, 2.0);
  const auto p = SparseParameter::from_values({1.0, 0.1, -0.5, 0.2, 1.5, 0.0});
  const auto f = TargetFunction::network(a, p);
  const double x[] = {0.3};
  EXPECT_EQ(f(x), forward(a, p, x));
  EXPECT_EQ(make_target(f.to_json())(x), f(x));
}

TEST(HolderTestFunction, DeterministicWithSpecifiedRanges) {
  const auto f = holder_test_function(TargetFamily::Cusp, 0.7, 3, 9);
  const auto g = holder_test_function(TargetFamily::Cusp, 0.7, 3, 9);
  ASSERT_EQ(f.parameters().size(), 3u);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(f.parameters()[j], g.parameters()[j]);
    EXPECT_LE(std::abs(f.parameters()[j]), 0.5);
  }
  const auto trig = holder_test_function(TargetFamily::Trigonometric, 0, 4, 1);
  for (double c : trig.parameters()) {
    EXPECT_GE(c, 0.5);
    EXPECT_LE(c, 1.5);
  }
}

TEST(GenData, ReproducibleAndNoiseHasRequestedVariance) {
  const auto f0 = TargetFunction::cusp(1.0, {0.0});
  const auto a = gen_data(f0, 20000, 0.25, 3), b = gen_data(f0, 20000, 0.25, 3);
  EXPECT_TRUE(std::equal(a.ys().begin(), a.ys().end(), b.ys().begin()));
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = a.ys()[i] - f0(a.point(i));
    s += e;
    s2 += e * e;
    ASSERT_LE(std::abs(a.point(i)[0]), 1.0);
  }
  EXPECT_NEAR(s / a.size(), 0.0, 4 * 0.5 / std::sqrt(20000.0));
  EXPECT_NEAR(s2 / a.size(), 0.25, 4 * 0.25 * std::sqrt(2.0 / 20000));
  EXPECT_EQ(a.noise_variance(), 0.25);
}

TEST(GeneralizationError, ZeroNetworkAgainstCusp) {
  // int_{-1}^{1} (x - a)^2 dx = 2/3 + 2 a^2
  const double c = 0.3;
  const auto f0 = TargetFunction::cusp(1.0, {c});
  const Architecture arch(1, 3, 1, 2.0);
  VariationalPosterior q(arch, {}, std::vector<GaussianSlab>{});
  const auto e = generalization_error(q, f0, 4, 4096, Rng(1, "gen"));
  EXPECT_NEAR(e.estimate, 2.0 / 3.0 + 2 * c * c, 2e-3);
  EXPECT_EQ(e.std_error, 0.0);
  EXPECT_EQ(e.draws.size(), 4u);
}

TEST(GeneralizationError, ConstantNetworkAgainstZero) {
  // f_theta = c nearly surely, f0 = 0: the squared L2 norm on [-1,1] is 2 c^2.
  const Architecture arch(1, 3, 1, 2.0);
  const auto f0 = TargetFunction::network(arch, SparseParameter::from_values(std::vector<double>(6, 0.0)));
  VariationalPosterior q(arch, {5}, std::vector<GaussianSlab>{{0.7, 1e-14}});
  const auto e = generalization_error(q, f0, 8, 1024, Rng(2, "gen"));
  EXPECT_NEAR(e.estimate, 2 * 0.49, 1e-3);
  const auto e2 = generalization_error(q, f0, 8, 2048, Rng(2, "gen"));
  EXPECT_NEAR(e2.estimate, e.estimate, 1e-6);
}

TEST(Config, ParsesDefaultsAndRejectsUnknownKeys) {
  const auto c = experiment_config_from_json(minimal_config());
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.alpha, 0.5);
  EXPECT_EQ(c.slab, SlabFamily::Gaussian);
  EXPECT_EQ(c.train.iterations, 20u);
  EXPECT_EQ(c.digest(), experiment_config_from_json(minimal_config()).digest());

  auto bad = minimal_config();
  bad["learning_rate"] = 0.1;
  EXPECT_THROW(experiment_config_from_json(bad), ConfigError);
  bad = minimal_config();
  bad["train"]["iters"] = 1;
  EXPECT_THROW(experiment_config_from_json(bad), ConfigError);
  bad = minimal_config();
  bad["alpha"] = 1.0;
  EXPECT_THROW(experiment_config_from_json(bad), ConfigError);
  bad = minimal_config();
  bad["n_grid"] = {32, 16};
  EXPECT_THROW(experiment_config_from_json(bad), ConfigError);
  bad = minimal_config();
  bad["target"]["family"] = "spline";
  EXPECT_THROW(experiment_config_from_json(bad), ConfigError);

  auto other = minimal_config();
  other["seed"] = 6;
  EXPECT_NE(experiment_config_from_json(other).digest(), c.digest());
}

TEST(Config, RoundTripThroughJson) {
  const auto c = experiment_config_from_json(minimal_config());
  const auto back = experiment_config_from_json(nlohmann::json::parse(c.to_json().dump()));
  EXPECT_EQ(back.digest(), c.digest());
}

TEST(ShrinkArchitecture, RateStudySizing) {
  // n = 128, d = 1, beta = 1: L = 8 + 12 = 20 -> 3; inner floor(128^{1/3}/log 128) = 1,
  // D = 3 with C_D = 3; T' = 3*2 + 3*4 + 4 = 22; S' = 11.
  const auto s = shrink_architecture(128, 1, 1.0, 3.0, 0.5);
  EXPECT_EQ(s.original.depth, 20);
  EXPECT_EQ(s.depth, 3);
  EXPECT_EQ(s.width, 3);
  EXPECT_EQ(s.sparsity, 11u);
  EXPECT_EQ(shrink_architecture(2048, 1, 1.0, 3.0, 0.5).depth, 3);
}

TEST(FitSlope, ExactLine) {
  const double x[] = {1, 2, 3, 4}, y[] = {1, -1, -3, -5};
  const auto [slope, se] = fit_slope(x, y);
  EXPECT_DOUBLE_EQ(slope, -2.0);
  EXPECT_NEAR(se, 0.0, 1e-12);
}

TEST(RateStudy, SmallRunIsDeterministic) {
  auto j = minimal_config();
  j["seeds_per_n"] = 3;
  const auto cfg = experiment_config_from_json(j);
  const auto r1 = rate_study(cfg), r2 = rate_study(cfg);
  EXPECT_EQ(r1.rows.size(), 12u);
  EXPECT_EQ(r1.failures, 0u);
  EXPECT_EQ(r1.to_json().dump(), r2.to_json().dump());
  std::ostringstream c1, c2;
  r1.write_csv(c1);
  r2.write_csv(c2);
  EXPECT_EQ(c1.str(), c2.str());
  EXPECT_TRUE(std::isfinite(r1.slope));
  EXPECT_DOUBLE_EQ(r1.theoretical_slope, -2.0 / 3.0);

  auto few = j;
  few["n_grid"] = {16, 32, 64};
  EXPECT_THROW(rate_study(experiment_config_from_json(few)), ConfigError);
}

TEST(SelectStudy, SmallRun) {
  auto j = minimal_config();
  j["study"] = "select";
  j["architecture"] = nlohmann::json::parse(
      R"({"source": "candidates", "candidates": [{"S": 2, "L": 3, "D": 1}, {"S": 4, "L": 3, "D": 2}]})");
  j["seeds_per_n"] = 2;
  const auto rep = select_study(experiment_config_from_json(j));
  ASSERT_EQ(rep.runs.size(), 2u);
  for (const auto& run : rep.runs) {
    EXPECT_EQ(run.selection.table.size(), 2u);
    EXPECT_EQ(run.gen_error.size(), 2u);
    EXPECT_TRUE(run.selection.table[run.selection.index].selected);
  }
}

TEST(Config, ShippedConfigsLoad) {
  int seen = 0;
  for (const auto& e : std::filesystem::directory_iterator(std::filesystem::path(SPARSEVB_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_experiment_config(e.path())) << e.path();
    ++seen;
  }
  EXPECT_GT(seen, 0);
}
