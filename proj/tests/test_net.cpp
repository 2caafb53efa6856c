#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <tuple>

#include "sparsevb/errors.hpp"
#include "sparsevb/net.hpp"
#include "sparsevb/rng.hpp"
#include "sparsevb/verify.hpp"

using namespace sparsevb;

namespace {

SparseParameter dense(std::vector<double> v) {
  const auto n = v.size();
  return SparseParameter(std::move(v), std::vector<std::uint8_t>(n, 1));
}

SparseParameter zeros(const Architecture& a) {
  return SparseParameter(std::vector<double>(a.num_coefficients(), 0.0),
                         std::vector<std::uint8_t>(a.num_coefficients(), 0));
}

SparseParameter random_dense(const Architecture& a, Rng& rng, double scale) {
  std::vector<double> v(a.num_coefficients());
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return dense(std::move(v));
}

}  // namespace

TEST(Architecture, RejectsOutsideStandingAssumptions) {
  EXPECT_THROW(Architecture(1, 2, 1, 2.0), std::invalid_argument);
  EXPECT_THROW(Architecture(2, 3, 1, 2.0), std::invalid_argument);
  EXPECT_THROW(Architecture(1, 3, 1, 1.5), std::invalid_argument);
  EXPECT_NO_THROW(Architecture(1, 3, 1, 2.0));
}

TEST(Architecture, CoefficientCountMatchesLayerSum) {
  for (int d = 1; d <= 3; ++d)
    for (int L = 3; L <= 6; ++L)
      for (int D = d; D <= 5; ++D) {
        const Architecture a(d, L, D, 2.0);
        std::size_t t = 0;
        for (int l = 1; l <= L; ++l) t += a.layer_width(l) * (a.layer_width(l - 1) + 1);
        EXPECT_EQ(a.num_coefficients(), t);
        EXPECT_EQ(coefficient_count(d, L, D), t);
        EXPECT_LE(t, static_cast<std::size_t>(L * D * (D + 1)));
      }
  EXPECT_EQ(Architecture(1, 3, 1, 2.0).num_coefficients(), 6u);
  EXPECT_EQ(Architecture(2, 3, 2, 2.0).num_coefficients(), 15u);
}

TEST(IndexMap, SpecExamples) {
  const Architecture tiny(1, 3, 1, 2.0);
  EXPECT_EQ(index_map(tiny, 0), (CoefficientLocation{1, CoefficientKind::Weight, 0, 0}));
  EXPECT_EQ(index_map(tiny, 1), (CoefficientLocation{1, CoefficientKind::Bias, 0, -1}));
  const Architecture a(2, 3, 2, 2.0);
  EXPECT_EQ(index_map(a, a.num_coefficients() - 1), (CoefficientLocation{3, CoefficientKind::Bias, 0, -1}));
}

TEST(IndexMap, IsABijectionConsistentWithIndexHelpers) {
  const Architecture a(2, 4, 3, 2.0);
  std::set<std::tuple<int, int, int, int>> seen;
  for (std::size_t t = 0; t < a.num_coefficients(); ++t) {
    const auto loc = index_map(a, t);
    EXPECT_TRUE(seen.insert({loc.layer, static_cast<int>(loc.kind), loc.row, loc.col}).second);
    const auto back = loc.kind == CoefficientKind::Weight ? a.weight_index(loc.layer, loc.row, loc.col)
                                                          : a.bias_index(loc.layer, loc.row);
    EXPECT_EQ(back, t);
  }
  EXPECT_THROW(index_map(a, a.num_coefficients()), std::out_of_range);
}

TEST(SparseParameter, RejectsValuesOffTheMask) {
  EXPECT_THROW(SparseParameter({1.0, 0.5}, {1, 0}), std::invalid_argument);
  EXPECT_NO_THROW(SparseParameter({1.0, 0.0}, {1, 0}));
  const auto p = SparseParameter::from_values({0.0, 2.0, 0.0, -1.0});
  EXPECT_EQ(p.active_count(), 2u);
  EXPECT_EQ(p.active_indices(), (std::vector<std::size_t>{1, 3}));
}

TEST(Forward, SpecExamples) {
  const Architecture id(1, 3, 1, 2.0, Activation::Identity);
  const Architecture relu(1, 3, 1, 2.0, Activation::ReLU);
  // A_l = [1], b_l = [0] for every layer.
  const auto p = dense({1, 0, 1, 0, 1, 0});
  const double x1[] = {0.7}, x2[] = {-0.5};
  EXPECT_DOUBLE_EQ(forward(id, p, x1), 0.7);
  EXPECT_EQ(forward(relu, p, x2), 0.0);
  EXPECT_EQ(forward(relu, zeros(relu), x1), 0.0);
}

TEST(Forward, OutputLayerHasNoActivation) {
  const Architecture relu(1, 3, 1, 2.0);
  const auto p = SparseParameter::from_values({0, 0, 0, 0, 0, -1.5});
  const double x[] = {0.2};
  EXPECT_EQ(forward(relu, p, x), -1.5);
}

TEST(Forward, ShapeErrors) {
  const Architecture a(2, 3, 2, 2.0);
  const double x[] = {0.1};
  EXPECT_THROW(forward(a, zeros(a), x), ShapeError);
  EXPECT_THROW(forward(a, SparseParameter::from_values({1.0}), std::span<const double>(x, 1)), ShapeError);
}

TEST(Forward, RepeatedCallsAreBitIdentical) {
  const Architecture a(2, 4, 3, 2.0);
  Rng rng(1, "net");
  const auto p = random_dense(a, rng, 2.0);
  const double x[] = {0.3, -0.8};
  const double first = forward(a, p, x);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(forward(a, p, x), first);
}

TEST(PartialForward, SpecExamples) {
  const Architecture a(2, 3, 3, 2.0);
  Rng rng(2, "net");
  const auto p = random_dense(a, rng, 1.0);
  const double x[] = {0.25, -0.5};
  EXPECT_EQ(partial_forward(a, p, x, 0), (std::vector<double>{0.25, -0.5}));
  EXPECT_EQ(partial_forward(a, p, x, 3), (std::vector<double>{forward(a, p, x)}));
  EXPECT_EQ(partial_forward(a, zeros(a), x, 1), (std::vector<double>(3, 0.0)));
  EXPECT_THROW(partial_forward(a, p, x, 4), std::out_of_range);
}

TEST(Activation, OneLipschitzAndContracting) {
  Rng rng(3, "act");
  for (auto act : {Activation::ReLU, Activation::Identity}) {
    for (int i = 0; i < 10000; ++i) {
      const double x = rng.uniform(-5, 5), y = rng.uniform(-5, 5);
      EXPECT_LE(std::abs(activate(act, x) - activate(act, y)), std::abs(x - y));
      EXPECT_LE(std::abs(activate(act, x)), std::abs(x));
    }
  }
  EXPECT_EQ(activate_derivative(Activation::ReLU, 0.0), 0.0);
}

TEST(Backpropagate, MatchesFiniteDifferences) {
  const Architecture a(2, 4, 3, 2.0);
  Rng rng(4, "bp");
  const auto p = random_dense(a, rng, 1.0);
  const double x[] = {0.4, -0.3};
  Evaluator ev(a);
  std::vector<double> grad(a.num_coefficients(), 0.0);
  ev.value_and_gradient(p.theta(), x, 1.0, grad);
  std::vector<double> theta(p.theta().begin(), p.theta().end());
  for (std::size_t t = 0; t < theta.size(); ++t) {
    const double h = 1e-6, keep = theta[t];
    theta[t] = keep + h;
    const double up = ev.value(theta, x);
    theta[t] = keep - h;
    const double down = ev.value(theta, x);
    theta[t] = keep;
    EXPECT_NEAR(grad[t], (up - down) / (2 * h), 1e-6) << "t=" << t;
  }
}

TEST(LayerSupDeviation, SpecExamples) {
  const Architecture a(2, 3, 3, 2.0);
  Rng rng(5, "dev");
  const auto p = random_dense(a, rng, 2.0);
  const auto grid = sup_grid(2, 512);
  for (double r : layer_sup_deviation(a, p, p, grid)) EXPECT_EQ(r, 0.0);

  const Architecture id(1, 3, 1, 2.0, Activation::Identity);
  const double w = -1.3;
  const auto p1 = SparseParameter::from_values({w, 0, 0, 0, 0, 0});
  const auto r = layer_sup_deviation(id, p1, zeros(id), sup_grid(1, 16));
  EXPECT_DOUBLE_EQ(r[0], std::abs(w));

  EXPECT_THROW(layer_sup_deviation(a, p, p, PointSet(2, {})), std::invalid_argument);
}

TEST(LayerSupDeviation, BelowAnalyticBoundOnRandomPair) {
  const Architecture a(2, 3, 3, 2.0);
  Rng rng(6, "dev");
  const auto grid = sup_grid(2, 4096);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p1 = random_dense(a, rng, 2.0), p2 = random_dense(a, rng, 2.0);
    const auto emp = layer_sup_deviation(a, p1, p2, grid);
    const auto bound = perturbation_bound(a, p1, p2);
    for (std::size_t l = 0; l < emp.size(); ++l) EXPECT_LE(emp[l], bound[l] * (1 + 1e-9));
  }
}

TEST(LayerSupDeviation, MonotoneUnderGridRefinement) {
  const Architecture a(2, 4, 3, 2.0);
  Rng rng(7, "dev");
  const auto p1 = random_dense(a, rng, 2.0), p2 = random_dense(a, rng, 2.0);
  const auto coarse = layer_sup_deviation(a, p1, p2, sup_grid(2, 256));
  const auto fine = layer_sup_deviation(a, p1, p2, sup_grid(2, 256).concat(halton_points(2, 4096)));
  for (std::size_t l = 0; l < coarse.size(); ++l) EXPECT_GE(fine[l], coarse[l]);
}

TEST(SupGrid, ContainsCornersAndStaysInCube) {
  const auto g = sup_grid(3, 100);
  EXPECT_EQ(g.size(), 108u);
  for (double c : g.coords()) {
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
  }
  EXPECT_EQ(g.point(7)[0], 1.0);
  EXPECT_EQ(g.point(7)[2], 1.0);
  EXPECT_EQ(g.point(0)[1], -1.0);
}
