#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sparsevb/errors.hpp"
#include "sparsevb/rng.hpp"
#include "sparsevb/spikeslab.hpp"

using namespace sparsevb;

TEST(Rng, StreamsAreReproducibleAndIndependentOfUseOrder) {
  const Rng root(42, "test");
  Rng a = root.child(3), b = root.child(3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c = root.child(4);
  Rng d = root.child(3);
  (void)c.next_u64();
  EXPECT_EQ(d.next_u64(), Rng(42, "test").child(3).next_u64());
  EXPECT_NE(Rng(42, "x").next_u64(), Rng(42, "y").next_u64());
  EXPECT_NE(Rng(1, "x").next_u64(), Rng(2, "x").next_u64());
}

TEST(Rng, PhiloxKnownAnswer) {
  // Random123 known-answer vector for philox4x32-10 with all-ones inputs.
  const auto out = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Rng, UniformAndNormalMoments) {
  Rng r(7, "moments");
  double su = 0, sn = 0, sn2 = 0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / N, 0.5, 4 * std::sqrt(1.0 / 12 / N));
  EXPECT_NEAR(sn / N, 0.0, 4 / std::sqrt(N));
  EXPECT_NEAR(sn2 / N, 1.0, 4 * std::sqrt(2.0 / N));
}

TEST(Rng, SubsetIsSortedDistinctAndInRange) {
  Rng r(8, "subset");
  for (int i = 0; i < 100; ++i) {
    const auto s = r.subset(13, 5);
    ASSERT_EQ(s.size(), 5u);
    for (std::size_t k = 0; k < s.size(); ++k) {
      EXPECT_LT(s[k], 13u);
      if (k) EXPECT_LT(s[k - 1], s[k]);
    }
  }
}

TEST(SamplePrior, FullSparsityGivesAllOnesMask) {
  const SpikeSlabPrior prior(Architecture(1, 3, 1, 2.0), 6, SlabFamily::Uniform);
  Rng r(1, "prior");
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_prior(prior, r).active_count(), 6u);
}

TEST(SamplePrior, UniformSlabMomentsAndBound) {
  const SpikeSlabPrior prior(Architecture(1, 3, 1, 2.0), 6, SlabFamily::Uniform);
  Rng r(2, "prior");
  const int N = 100000;
  double sum = 0, maxabs = 0;
  for (int i = 0; i < N; ++i) {
    const double v = sample_prior(prior, r).theta()[2];
    sum += v;
    maxabs = std::max(maxabs, std::abs(v));
  }
  EXPECT_NEAR(sum / N, 0.0, 3 * std::sqrt(4.0 / 3.0 / N));
  EXPECT_LE(maxabs, 2.0);
}

TEST(SamplePrior, InclusionFrequencyIsSOverT) {
  const SpikeSlabPrior prior(Architecture(1, 3, 2, 2.0), 4, SlabFamily::Gaussian);
  const std::size_t T = prior.arch.num_coefficients();
  Rng r(3, "prior");
  const int N = 100000;
  std::vector<int> hits(T, 0);
  for (int i = 0; i < N; ++i) {
    const auto p = sample_prior(prior, r);
    ASSERT_EQ(p.active_count(), 4u);
    for (std::size_t t = 0; t < T; ++t) hits[t] += p.mask()[t];
  }
  const double pr = 4.0 / T;
  for (std::size_t t = 0; t < T; ++t)
    EXPECT_NEAR(hits[t] / double(N), pr, 3 * std::sqrt(pr * (1 - pr) / N)) << "t=" << t;
}

TEST(SampleVariational, MaskIsDeterministicAndSlabsConcentrate) {
  const Architecture a(1, 3, 2, 2.0);
  VariationalPosterior q(a, {1, 4, 7}, std::vector<GaussianSlab>{{0.3, 1e-6}, {-1.0, 1.0}, {2.0, 0.5}});
  Rng r(4, "vi");
  int close = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto p = sample_variational(q, r);
    ASSERT_EQ(p.active_indices(), (std::vector<std::size_t>{1, 4, 7}));
    close += std::abs(p.theta()[1] - 0.3) <= 0.01;
  }
  EXPECT_GE(close / 10000.0, 0.999);
}

TEST(SampleVariational, DegenerateIntervalRejected) {
  const Architecture a(1, 3, 1, 2.0);
  VariationalPosterior q(a, {0}, std::vector<UniformSlab>{{0.5, 0.5}});
  Rng r(5, "vi");
  EXPECT_THROW(sample_variational(q, r), std::invalid_argument);
}

TEST(VariationalPosterior, ValidatesSlabs) {
  const Architecture a(1, 3, 1, 2.0);
  EXPECT_THROW(VariationalPosterior(a, {0}, std::vector<UniformSlab>{{-3.0, 0.0}}), std::invalid_argument);
  EXPECT_THROW(VariationalPosterior(a, {0}, std::vector<UniformSlab>{{1.0, 0.0}}), std::invalid_argument);
  EXPECT_THROW(VariationalPosterior(a, {0}, std::vector<GaussianSlab>{{0.0, 0.0}}), std::invalid_argument);
  EXPECT_THROW(VariationalPosterior(a, {2, 1}, std::vector<GaussianSlab>{{0, 1}, {0, 1}}), std::invalid_argument);
  EXPECT_THROW(VariationalPosterior(a, {6}, std::vector<GaussianSlab>{{0, 1}}), std::out_of_range);
}

TEST(KlToPrior, SpecExamples) {
  const Architecture a(1, 3, 1, 2.0);
  std::vector<std::size_t> all(6);
  std::iota(all.begin(), all.end(), 0);
  VariationalPosterior full(a, all, std::vector<UniformSlab>(6, {-2.0, 2.0}));
  EXPECT_EQ(kl_to_prior(full, SpikeSlabPrior(a, 6, SlabFamily::Uniform)), 0.0);

  const double kl_std = slab_kl(GaussianSlab{0.0, 1.0});
  EXPECT_EQ(kl_std, 0.0);
}

TEST(KlToPrior, ThreeCoefficientExampleAgreesWithOracle) {
  // T = 3 needs a network with three coefficients; the closed form only sees
  // (T, S, slab), so we check the formula through the oracle on a T = 6 model
  // and the stated T = 3 value directly from its parts.
  EXPECT_NEAR(log_binomial(3, 1) + slab_kl(UniformSlab{0.0, 1.0}, 2.0), std::log(12.0), 1e-12);
  EXPECT_NEAR(std::log(12.0), 2.4849066497880004, 1e-15);

  const Architecture a(1, 3, 1, 2.0);
  const SpikeSlabPrior prior(a, 1, SlabFamily::Uniform);
  VariationalPosterior q(a, {2}, std::vector<UniformSlab>{{0.0, 1.0}});
  EXPECT_NEAR(kl_to_prior(q, prior), std::log(6.0) + std::log(4.0), 1e-12);
  EXPECT_NEAR(kl_numeric_oracle(q, prior), kl_to_prior(q, prior), 1e-6);
}

TEST(KlToPrior, Errors) {
  const Architecture a(1, 3, 1, 2.0);
  VariationalPosterior u(a, {0}, std::vector<UniformSlab>{{0.0, 1.0}});
  VariationalPosterior deg(a, {0}, std::vector<UniformSlab>{{0.5, 0.5}});
  EXPECT_THROW(kl_to_prior(u, SpikeSlabPrior(a, 1, SlabFamily::Gaussian)), std::invalid_argument);
  EXPECT_THROW(kl_to_prior(u, SpikeSlabPrior(a, 2, SlabFamily::Uniform)), std::invalid_argument);
  EXPECT_THROW(kl_to_prior(deg, SpikeSlabPrior(a, 1, SlabFamily::Uniform)), InfiniteKlError);
}

TEST(KlToPrior, NonnegativeAndPermutationInvariantDecomposition) {
  const Architecture a(2, 3, 2, 2.0);
  Rng r(9, "kl");
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t S = 1 + r.below(a.num_coefficients());
    const auto act = r.subset(a.num_coefficients(), S);
    std::vector<GaussianSlab> g;
    double sum = 0;
    for (std::size_t k = 0; k < S; ++k) {
      g.push_back({r.uniform(-2, 2), std::exp(r.uniform(-3, 1))});
      sum += slab_kl(g.back());
    }
    VariationalPosterior q(a, act, g);
    const double kl = kl_to_prior(q, SpikeSlabPrior(a, S, SlabFamily::Gaussian));
    EXPECT_GE(kl, 0.0);
    EXPECT_NEAR(kl - log_binomial(a.num_coefficients(), S), sum, 1e-12);
    // Moving the same slabs to another active set leaves KL unchanged.
    VariationalPosterior moved(a, r.subset(a.num_coefficients(), S), g);
    EXPECT_NEAR(kl_to_prior(moved, SpikeSlabPrior(a, S, SlabFamily::Gaussian)), kl, 1e-12);
  }
}

TEST(KlNumericOracle, ZeroAtPriorAndHalvingAddsLog2) {
  const Architecture a(1, 3, 1, 2.0);
  std::vector<std::size_t> all(6);
  std::iota(all.begin(), all.end(), 0);
  const SpikeSlabPrior prior(a, 6, SlabFamily::Uniform);
  EXPECT_NEAR(kl_numeric_oracle(VariationalPosterior(a, all, std::vector<UniformSlab>(6, {-2.0, 2.0})), prior), 0.0,
              1e-9);
  const SpikeSlabPrior p1(a, 1, SlabFamily::Uniform);
  const double wide = kl_numeric_oracle(VariationalPosterior(a, {3}, std::vector<UniformSlab>{{-0.5, 1.5}}), p1);
  const double half = kl_numeric_oracle(VariationalPosterior(a, {3}, std::vector<UniformSlab>{{-0.5, 0.5}}), p1);
  EXPECT_NEAR(half - wide, std::log(2.0), 1e-6);
}

TEST(KlNumericOracle, RefusesLargeModelsAndLowResolution) {
  const Architecture big(1, 3, 2, 2.0);  // T = 13
  VariationalPosterior q(big, {0}, std::vector<GaussianSlab>{{0, 1}});
  EXPECT_THROW(kl_numeric_oracle(q, SpikeSlabPrior(big, 1, SlabFamily::Gaussian)), RefusalError);
  const Architecture a(1, 3, 1, 2.0);
  VariationalPosterior s(a, {0}, std::vector<GaussianSlab>{{0, 1}});
  EXPECT_THROW(kl_numeric_oracle(s, SpikeSlabPrior(a, 1, SlabFamily::Gaussian), 500), std::invalid_argument);
}

TEST(SnRadius, UniformHandValue) {
  // Independent evaluation in exact fractions: bracket = 81/4 + 1/3 + 2 = 271/12,
  // s_n^2 = (1/4)(1/64)(12/271) = 3/17344.
  const double oracle = 3.0 / 17344.0;
  const auto r = sn_radius(Architecture(1, 3, 1, 2.0), 1, 1, SlabFamily::Uniform);
  EXPECT_NEAR(r.value, oracle, 1e-18);
  EXPECT_NEAR(r.value, 1.7297e-4, 1e-8);
}

TEST(SnRadius, ScalingAndMonotonicity) {
  for (auto v : {SlabFamily::Uniform, SlabFamily::Gaussian}) {
    const Architecture a(2, 4, 3, 2.0), deeper(2, 5, 3, 2.0);
    const double r1 = sn_radius(a, 5, 100, v).value;
    EXPECT_DOUBLE_EQ(sn_radius(a, 5, 200, v).value, r1 / 2);
    EXPECT_LT(sn_radius(deeper, 5, 100, v).value, r1);
    EXPECT_GT(r1, 0.0);
  }
}

TEST(SnRadius, GaussianRadiusAtMostOneWhenNAtLeastS) {
  for (int d = 1; d <= 3; ++d)
    for (int L = 3; L <= 6; ++L)
      for (int D = d; D <= 6; ++D)
        for (double B : {2.0, 3.0})
          for (std::size_t S : {1, 5, 50})
            for (std::size_t n : {S, 2 * S, 100 * S})
              EXPECT_LE(sn_radius(Architecture(d, L, D, B), S, n, SlabFamily::Gaussian).value, 1.0);
}

TEST(ReferenceVariational, SpecExamples) {
  const Architecture a(1, 3, 1, 2.0);
  const auto star = SparseParameter::from_values({0.0, 1.0, 0.0, -0.5, 2.0, 0.0});
  const SpikeSlabPrior gp(a, 3, SlabFamily::Gaussian);
  const auto rg = sn_radius(a, 3, 50, SlabFamily::Gaussian);
  const auto qg = reference_variational(star, rg, gp);
  EXPECT_EQ(std::vector<std::size_t>(qg.active().begin(), qg.active().end()), (std::vector<std::size_t>{1, 3, 4}));
  EXPECT_EQ(qg.gaussian_slabs()[1].mean, -0.5);
  EXPECT_EQ(qg.gaussian_slabs()[1].variance, rg.value);

  const SpikeSlabPrior up(a, 3, SlabFamily::Uniform);
  const auto ru = sn_radius(a, 3, 50, SlabFamily::Uniform);
  const auto qu = reference_variational(star, ru, up);
  const double s = std::sqrt(ru.value);
  EXPECT_DOUBLE_EQ(qu.uniform_slabs()[2].upper, 2.0);
  EXPECT_DOUBLE_EQ(qu.uniform_slabs()[2].lower, 2.0 - 2 * s);
  EXPECT_DOUBLE_EQ(qu.uniform_slabs()[0].lower, 1.0 - s);

  EXPECT_THROW(reference_variational(star, ru, SpikeSlabPrior(a, 2, SlabFamily::Uniform)), std::invalid_argument);
}

TEST(Json, RoundTrip) {
  const Architecture a(2, 3, 2, 2.5, Activation::Identity);
  EXPECT_EQ(architecture_from_json(to_json(a)), a);
  const SpikeSlabPrior p(a, 4, SlabFamily::Gaussian);
  const auto p2 = prior_from_json(to_json(p));
  EXPECT_EQ(p2.arch, a);
  EXPECT_EQ(p2.sparsity, 4u);
  VariationalPosterior q(a, {0, 5}, std::vector<UniformSlab>{{-1, 1}, {0.25, 0.5}});
  const auto q2 = posterior_from_json(to_json(q));
  EXPECT_EQ(q2.mask(), q.mask());
  EXPECT_EQ(q2.uniform_slabs()[1].lower, 0.25);
}
