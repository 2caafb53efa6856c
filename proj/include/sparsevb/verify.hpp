#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparsevb/elbo.hpp"
#include "sparsevb/net.hpp"
#include "sparsevb/rng.hpp"
#include "sparsevb/spikeslab.hpp"

namespace sparsevb {

inline constexpr double kBoundTolerance = 1e-9;

struct BoundTrial {
  std::string digest;  // hash of the inputs
  int layer;           // layer with the largest empirical / analytic ratio
  double empirical;
  double bound;
};

struct BoundCheckReport {
  std::string name;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double max_ratio = 0.0;
  std::vector<BoundTrial> records;

  void merge(const BoundCheckReport& other);
  nlohmann::ordered_json to_json(bool with_records = false) const;
};

// Analytic layer bounds, index l-1 for layer l.
std::vector<double> c_bound(const Architecture& arch);
std::vector<double> perturbation_bound(const Architecture& arch, const SparseParameter& p1,
                                       const SparseParameter& p2);
std::vector<double> gaussian_perturbation_bound(const Architecture& arch, const SparseParameter& p_star,
                                                const SparseParameter& p);

BoundCheckReport check_c_bound(const Architecture& arch, const SparseParameter& theta_star, const PointSet& grid);
BoundCheckReport check_perturbation_bound(const Architecture& arch, const SparseParameter& p1,
                                          const SparseParameter& p2, const PointSet& grid);
BoundCheckReport check_gaussian_perturbation_bound(const Architecture& arch, const SparseParameter& p_star,
                                                   const SparseParameter& p, const PointSet& grid);

struct PriorMassCheck {
  bool deviation_ok;
  bool kl_ok;
  double deviation;  // MC estimate of the integrated squared L2 deviation
  double deviation_se;
  double kl;
  double rate;
  double radius;  // s_n^2
};

// Squared L2 norm on [-1,1]^d (Lebesgue, no 2^-d factor) of f_theta - f_ref,
// estimated on a fixed point set.
double squared_l2_distance(Evaluator& ev, std::span<const double> theta, std::span<const double> ref_values,
                           const PointSet& xs);

PriorMassCheck check_extended_prior_mass(const Architecture& arch, std::size_t sparsity, std::size_t n,
                                         const SparseParameter& theta_star, SlabFamily variant,
                                         std::size_t n_theta, std::size_t n_x, const Rng& rng);

struct MarkovCheck {
  double fraction_exceeding;
  double bound;  // 1/M
  double slack;
  bool ok;
};

MarkovCheck markov_concentration(std::span<const double> samples, double M);

struct ExactPosterior {
  double log_evidence;
  std::vector<double> predictive_mean;          // on the supplied grid
  std::vector<std::vector<std::size_t>> masks;  // all C(T,S) masks
  std::vector<double> mask_probabilities;
  int resolution;  // nodes per coordinate at convergence
};

// Tempered evidence Z = E_prior exp(-(alpha/2 sigma^2) sum_i (Y_i - f_theta(X_i))^2)
// by mask enumeration and tensor-product Gauss-Legendre quadrature, with the
// node count doubled until successive log-evidences agree to 1e-4.
ExactPosterior exact_posterior_oracle(const Dataset& data, const SpikeSlabPrior& prior, double alpha,
                                      int resolution, const PointSet& grid);

// Randomized sweeps at (d=2, L=4, D=3, B=2); suite is one of all, c_bound,
// perturbation, gaussian_perturbation, prior_mass.
nlohmann::ordered_json run_verify_suite(const std::string& suite, std::size_t trials, std::uint64_t seed,
                                        bool& any_violation);

}  // namespace sparsevb
