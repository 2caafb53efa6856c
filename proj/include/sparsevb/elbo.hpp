#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sparsevb/net.hpp"
#include "sparsevb/rng.hpp"
#include "sparsevb/spikeslab.hpp"

namespace sparsevb {

// Regression sample: n points in [-1,1]^d with responses and the known noise
// variance sigma^2.
class Dataset {
 public:
  Dataset(int dim, std::vector<double> xs, std::vector<double> ys, double noise_variance);

  int dim() const { return dim_; }
  std::size_t size() const { return ys_.size(); }
  bool empty() const { return ys_.empty(); }
  double noise_variance() const { return noise_variance_; }
  std::span<const double> point(std::size_t i) const {
    return std::span<const double>(xs_).subspan(i * dim_, dim_);
  }
  std::span<const double> xs() const { return xs_; }
  std::span<const double> ys() const { return ys_; }

  // Rows reordered so that row i of the result is row order[i] of this dataset.
  Dataset permuted(std::span<const std::size_t> order) const;

 private:
  int dim_;
  std::vector<double> xs_;
  std::vector<double> ys_;
  double noise_variance_;
};

struct FitEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct ElboEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
  double fit_term = 0.0;
  double kl_term = 0.0;
  double alpha = 0.0;
};

// MC estimate of (alpha / 2 sigma^2) sum_i E_q (Y_i - f_theta(X_i))^2. Draw k
// uses the stream rng.child(k), so equal rngs give common random numbers.
FitEstimate fit_term(const Dataset& data, const VariationalPosterior& q, double alpha,
                     std::size_t n_samples, const Rng& rng);

// Per-draw totals of the tempered squared loss; the summands of fit_term.
std::vector<double> fit_term_draws(const Dataset& data, const VariationalPosterior& q, double alpha,
                                   std::size_t n_samples, const Rng& rng);

ElboEstimate elbo(const Dataset& data, const VariationalPosterior& q, const SpikeSlabPrior& prior,
                  double alpha, std::size_t n_samples, const Rng& rng);

// Unconstrained slab parameters, two per active coordinate in mask order:
// uniform slabs (center, log half-width), Gaussian slabs (mean, log sd).
std::vector<double> slab_parameters(const VariationalPosterior& q);

// Projects uniform-slab parameters so that every interval stays inside [-B, B]
// with a positive width. Gaussian parameters are left unchanged.
void project_slab_parameters(SlabFamily family, double bound, std::span<double> params);

VariationalPosterior with_slab_parameters(const VariationalPosterior& q, std::span<const double> params);

// Analytic gradient of KL(q || prior) in the slab parameters.
std::vector<double> kl_gradient(const VariationalPosterior& q);

struct ElboGradient {
  std::vector<double> gradient;  // d ELBO / d slab_parameters(q)
  ElboEstimate estimate;         // ELBO on the same draws
};

// Pathwise (reparameterized) gradient of the ELBO, averaged over n_samples
// common-random-number draws; the KL part is exact.
ElboGradient elbo_gradient(const Dataset& data, const VariationalPosterior& q, const SpikeSlabPrior& prior,
                           double alpha, std::size_t n_samples, const Rng& rng);

namespace reference {

// Serial, naively summed versions of the OpenMP kernels above.
FitEstimate fit_term(const Dataset& data, const VariationalPosterior& q, double alpha,
                     std::size_t n_samples, const Rng& rng);
ElboGradient elbo_gradient(const Dataset& data, const VariationalPosterior& q, const SpikeSlabPrior& prior,
                           double alpha, std::size_t n_samples, const Rng& rng);
std::vector<double> layer_sup_deviation(const Architecture& arch, const SparseParameter& p1,
                                        const SparseParameter& p2, const PointSet& grid);

}  // namespace reference

}  // namespace sparsevb
