#include <gtest/gtest.h>

#include <cmath>

#include "sparsevb/elbo.hpp"
#include "sparsevb/errors.hpp"

using namespace sparsevb;

namespace {

Dataset line_data(std::size_t n, double sigma2) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -1.0 + 2.0 * (i + 0.5) / n;
    xs.push_back(x);
    ys.push_back(0.3 * x + 0.1);
  }
  return Dataset(1, xs, ys, sigma2);
}

// Random Gaussian posterior on a random mask of size S.
VariationalPosterior random_gaussian(const Architecture& a, std::size_t S, Rng& r) {
  std::vector<GaussianSlab> g;
  for (std::size_t k = 0; k < S; ++k) g.push_back({r.uniform(-1, 1), std::exp(r.uniform(-4, -1))});
  return VariationalPosterior(a, r.subset(a.num_coefficients(), S), g);
}

VariationalPosterior random_uniform(const Architecture& a, std::size_t S, Rng& r) {
  std::vector<UniformSlab> u;
  for (std::size_t k = 0; k < S; ++k) {
    const double c = r.uniform(-1, 1), w = r.uniform(0.01, 0.3);
    u.push_back({c - w, c + w});
  }
  return VariationalPosterior(a, r.subset(a.num_coefficients(), S), u);
}

}  // namespace

TEST(Dataset, Validation) {
  EXPECT_THROW(Dataset(1, {0.0, 0.5}, {1.0}, 1.0), ShapeError);
  EXPECT_THROW(Dataset(1, {1.5}, {1.0}, 1.0), std::invalid_argument);
  EXPECT_THROW(Dataset(1, {0.5}, {1.0}, -1.0), std::invalid_argument);
  EXPECT_NO_THROW(Dataset(1, {}, {}, 1.0));
  const auto d = line_data(4, 1.0);
  const std::size_t order[] = {3, 2, 1, 0};
  const auto p = d.permuted(order);
  EXPECT_EQ(p.ys()[0], d.ys()[3]);
  EXPECT_EQ(p.point(0)[0], d.point(3)[0]);
}

TEST(FitTerm, EmptyMaskIsExact) {
  const Architecture a(1, 3, 2, 2.0);
  const auto data = line_data(10, 0.5);
  VariationalPosterior q(a, {}, std::vector<GaussianSlab>{});
  double oracle = 0;
  for (double y : data.ys()) oracle += y * y;
  oracle *= 0.3 / (2 * 0.5);
  const auto f = fit_term(data, q, 0.3, 8, Rng(1, "fit"));
  EXPECT_NEAR(f.value, oracle, 1e-12);
  EXPECT_EQ(f.std_error, 0.0);
}

TEST(FitTerm, UnbiasedForOutputBiasOnly) {
  // Only the output bias is active, so f_theta is the constant theta and
  // E (y - theta)^2 = (y - m)^2 + v.
  const Architecture a(1, 3, 2, 2.0);
  const auto data = line_data(16, 0.25);
  const double m = 0.2, v = 0.09, alpha = 0.7;
  VariationalPosterior q(a, {a.num_coefficients() - 1}, std::vector<GaussianSlab>{{m, v}});
  double oracle = 0;
  for (double y : data.ys()) oracle += (y - m) * (y - m) + v;
  oracle *= alpha / (2 * 0.25);
  const auto f = fit_term(data, q, alpha, 4000, Rng(2, "fit"));
  EXPECT_NEAR(f.value, oracle, 4 * f.std_error);
  EXPECT_GT(f.std_error, 0.0);
}

TEST(FitTerm, CommonRandomNumbers) {
  const Architecture a(2, 3, 3, 2.0);
  Rng r(3, "q");
  const auto q = random_gaussian(a, 8, r);
  std::vector<double> xs, ys;
  for (int i = 0; i < 20; ++i) {
    xs.push_back(r.uniform(-1, 1));
    xs.push_back(r.uniform(-1, 1));
    ys.push_back(r.normal());
  }
  const Dataset data(2, xs, ys, 1.0);
  const Rng draws(4, "draws");
  EXPECT_EQ(fit_term(data, q, 0.5, 16, draws).value, fit_term(data, q, 0.5, 16, draws).value);
  const auto per = fit_term_draws(data, q, 0.5, 16, draws);
  ASSERT_EQ(per.size(), 16u);
  double s = 0;
  for (double v : per) s += v;
  EXPECT_NEAR(s / 16, fit_term(data, q, 0.5, 16, draws).value, 1e-12);
  EXPECT_THROW(fit_term(Dataset(2, {}, {}, 1.0), q, 0.5, 16, draws), std::invalid_argument);
}

TEST(Elbo, DecompositionAndEmptyData) {
  const Architecture a(1, 3, 2, 2.0);
  Rng r(5, "q");
  const auto q = random_gaussian(a, 4, r);
  const SpikeSlabPrior prior(a, 4, SlabFamily::Gaussian);
  const auto data = line_data(12, 0.25);
  const Rng draws(6, "draws");
  const auto e = elbo(data, q, prior, 0.5, 32, draws);
  EXPECT_NEAR(e.value, -e.fit_term - e.kl_term, 1e-12);
  EXPECT_NEAR(e.kl_term, kl_to_prior(q, prior), 1e-12);
  EXPECT_EQ(e.n_samples, 32u);
  EXPECT_EQ(e.alpha, 0.5);

  const auto empty = elbo(Dataset(1, {}, {}, 1.0), q, prior, 0.5, 32, draws);
  EXPECT_EQ(empty.value, -kl_to_prior(q, prior));
}

TEST(Elbo, InputChecks) {
  const Architecture a(1, 3, 2, 2.0);
  Rng r(7, "q");
  const auto q = random_gaussian(a, 4, r);
  const SpikeSlabPrior prior(a, 4, SlabFamily::Gaussian);
  const auto data = line_data(12, 0.25);
  const Rng draws(8, "draws");
  EXPECT_THROW(elbo(data, q, prior, 0.0, 32, draws), std::invalid_argument);
  EXPECT_THROW(elbo(data, q, prior, 1.0, 32, draws), std::invalid_argument);
  EXPECT_THROW(elbo(data, q, prior, 0.5, 1, draws), std::invalid_argument);
  EXPECT_THROW(elbo(Dataset(2, {0, 0}, {1}, 1.0), q, prior, 0.5, 32, draws), ShapeError);
  EXPECT_THROW(elbo(line_data(3, 0.0), q, prior, 0.5, 32, draws), std::invalid_argument);
}

TEST(SlabParameters, RoundTrip) {
  const Architecture a(1, 3, 2, 2.0);
  Rng r(9, "q");
  for (auto q : {random_gaussian(a, 5, r), random_uniform(a, 5, r)}) {
    const auto p = slab_parameters(q);
    ASSERT_EQ(p.size(), 10u);
    const auto back = with_slab_parameters(q, p);
    EXPECT_EQ(back.mask(), q.mask());
    const auto p2 = slab_parameters(back);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p2[i], p[i], 1e-12);
  }
}

TEST(SlabParameters, ProjectionKeepsIntervalsInside) {
  Rng r(10, "proj");
  for (int i = 0; i < 1000; ++i) {
    double p[2] = {r.uniform(-10, 10), r.uniform(-50, 5)};
    project_slab_parameters(SlabFamily::Uniform, 2.0, p);
    const double w = std::exp(p[1]);
    EXPECT_GT(w, 0.0);
    EXPECT_GE(p[0] - w, -2.0 - 1e-12);
    EXPECT_LE(p[0] + w, 2.0 + 1e-12);
  }
  double g[2] = {7.0, 3.0};
  project_slab_parameters(SlabFamily::Gaussian, 2.0, g);
  EXPECT_EQ(g[0], 7.0);
  EXPECT_EQ(g[1], 3.0);
}

TEST(KlGradient, MatchesFiniteDifferences) {
  const Architecture a(1, 3, 2, 2.0);
  Rng r(11, "kl");
  for (auto q : {random_gaussian(a, 4, r), random_uniform(a, 4, r)}) {
    const SpikeSlabPrior prior(a, 4, q.family());
    const auto g = kl_gradient(q);
    auto p = slab_parameters(q);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i], h = 1e-6;
      p[i] = keep + h;
      const double up = kl_to_prior(with_slab_parameters(q, p), prior);
      p[i] = keep - h;
      const double down = kl_to_prior(with_slab_parameters(q, p), prior);
      p[i] = keep;
      EXPECT_NEAR(g[i], (up - down) / (2 * h), 1e-6) << "i=" << i;
    }
  }
}

TEST(ElboGradient, MatchesFiniteDifferencesOnCommonDraws) {
  const Architecture a(1, 3, 3, 2.0);
  Rng r(12, "grad");
  std::vector<double> xs, ys;
  for (int i = 0; i < 24; ++i) {
    xs.push_back(r.uniform(-1, 1));
    ys.push_back(std::abs(xs.back()) + 0.1 * r.normal());
  }
  const Dataset data(1, xs, ys, 0.25);
  for (auto q : {random_gaussian(a, 10, r), random_uniform(a, 10, r)}) {
    const SpikeSlabPrior prior(a, 10, q.family());
    const Rng draws(13, "draws");
    const auto g = elbo_gradient(data, q, prior, 0.5, 8, draws);
    EXPECT_NEAR(g.estimate.value, elbo(data, q, prior, 0.5, 8, draws).value, 1e-10);
    auto p = slab_parameters(q);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i], h = 1e-5;
      p[i] = keep + h;
      const double up = elbo(data, with_slab_parameters(q, p), prior, 0.5, 8, draws).value;
      p[i] = keep - h;
      const double down = elbo(data, with_slab_parameters(q, p), prior, 0.5, 8, draws).value;
      p[i] = keep;
      const double fd = (up - down) / (2 * h);
      EXPECT_NEAR(g.gradient[i], fd, std::max(1e-8, 1e-4 * std::abs(fd))) << "i=" << i;
    }
  }
}
