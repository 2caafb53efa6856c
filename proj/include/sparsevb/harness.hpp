#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparsevb/arch.hpp"
#include "sparsevb/elbo.hpp"
#include "sparsevb/net.hpp"
#include "sparsevb/rng.hpp"
#include "sparsevb/spikeslab.hpp"
#include "sparsevb/train.hpp"

namespace sparsevb {

enum class TargetFamily { Cusp, SmoothedCusp, Trigonometric, Network };

// Regression function on [-1,1]^d.
//   Cusp:          prod_j |x_j - a_j|^beta, beta in (0, 1]
//   SmoothedCusp:  prod_j sign(x_j - a_j) |x_j - a_j|^beta / beta, beta in (1, 2]
//                  (antiderivative of the cusp with exponent beta - 1)
//   Trigonometric: sin(pi sum_j c_j x_j), smooth (beta = +inf)
//   Network:       a fixed ReLU network
class TargetFunction {
 public:
  static TargetFunction cusp(double beta, std::vector<double> center);
  static TargetFunction smoothed_cusp(double beta, std::vector<double> center);
  static TargetFunction trigonometric(std::vector<double> coefficients);
  static TargetFunction network(Architecture arch, SparseParameter theta);

  TargetFamily family() const { return family_; }
  double beta() const { return beta_; }
  int dim() const { return dim_; }
  std::span<const double> parameters() const { return params_; }
  double operator()(std::span<const double> x) const;

  nlohmann::ordered_json to_json() const;

 private:
  TargetFunction() = default;
  TargetFamily family_ = TargetFamily::Cusp;
  double beta_ = 0.0;
  int dim_ = 0;
  std::vector<double> params_;
  std::optional<Architecture> arch_;
  SparseParameter theta_;
};

const char* to_string(TargetFamily f);
TargetFamily target_family_from_string(const std::string& s);

// Cusp and smoothed-cusp centers a_j ~ U[-0.5, 0.5]; trigonometric
// coefficients c_j ~ U[0.5, 1.5]. beta is ignored for the trigonometric family.
TargetFunction holder_test_function(TargetFamily family, double beta, int dim, std::uint64_t seed);

// X_i ~ U([-1,1]^d), Y_i = f0(X_i) + N(0, sigma2).
Dataset gen_data(const TargetFunction& f0, std::size_t n, double sigma2, std::uint64_t seed);

struct GeneralizationError {
  double estimate;
  double std_error;
  std::vector<double> draws;  // squared L2 error of each theta draw
};

// Mean over theta ~ q of the squared L2 norm of f_theta - f0 on [-1,1]^d.
GeneralizationError generalization_error(const VariationalPosterior& q, const TargetFunction& f0,
                                         std::size_t n_theta, const PointSet& xs, const Rng& rng);
GeneralizationError generalization_error(const VariationalPosterior& q, const TargetFunction& f0,
                                         std::size_t n_theta, std::size_t n_x, const Rng& rng);

struct ArchitectureSpec {
  enum class Source { Explicit, Holder, Candidates } source = Source::Holder;
  double bound = 2.0;
  // Explicit
  std::size_t sparsity = 0;
  int depth = 0;
  int width = 0;
  // Holder
  double width_constant = 1.0;
  double sparsity_fraction = 0.5;  // c_s
  // Candidates
  std::vector<Candidate> candidates;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  double alpha = 0.5;
  double sigma2 = 0.25;
  nlohmann::json target;  // resolved by make_target
  std::vector<std::size_t> n_grid;
  std::size_t seeds_per_n = 3;
  ArchitectureSpec architecture;
  SlabFamily slab = SlabFamily::Gaussian;
  TrainConfig train;
  std::size_t gen_theta = 64;
  std::size_t gen_x = 1024;
  std::string study = "rate";

  nlohmann::ordered_json to_json() const;
  std::string digest() const;
};

// Parses and validates a config document; throws ConfigError with the
// offending key on failure.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

TargetFunction make_target(const nlohmann::json& spec);

struct ShrunkArchitecture {
  int depth;  // L' = max(3, ceil(L / 8))
  int width;  // D' = max(d, D)
  std::size_t sparsity;  // S' = min(S_max, floor(c_s T')), at least 1
  HolderArchitecture original;
};

ShrunkArchitecture shrink_architecture(std::size_t n, int dim, double beta, double width_constant,
                                       double sparsity_fraction);

struct RateRow {
  std::size_t n;
  std::size_t seed;
  std::size_t sparsity;
  int depth;
  int width;
  double elbo;
  double kl_term;
  double gen_error;
  double gen_error_se;
  double rate_formula;
  double minimax;
  bool failed;
  std::string failure;
  std::vector<double> draws;  // per-theta squared errors (not serialized to CSV)
};

struct RateStudyReport {
  std::vector<RateRow> rows;
  std::vector<std::size_t> n_grid;
  std::vector<double> mean_error;  // seed average per n
  double slope;
  double slope_se;
  double theoretical_slope;
  std::size_t failures;
  std::string config_digest;

  void write_csv(std::ostream& out) const;
  nlohmann::ordered_json to_json() const;
};

RateStudyReport rate_study(const ExperimentConfig& cfg);

// Least-squares slope of y on x with its standard error.
std::pair<double, double> fit_slope(std::span<const double> x, std::span<const double> y);

struct SelectionRun {
  std::size_t seed;
  Selection selection;
  std::vector<double> gen_error;  // per candidate, same order as the manifest
  std::vector<bool> failed;
};

struct SelectionReport {
  std::vector<SelectionRun> runs;
  std::vector<Candidate> manifest;
  std::string config_digest;

  void write_csv(std::ostream& out) const;
  nlohmann::ordered_json to_json() const;
};

// Trains every candidate of cfg.architecture.candidates on data of size
// cfg.n_grid.front(), for cfg.seeds_per_n data seeds.
SelectionReport select_study(const ExperimentConfig& cfg);

}  // namespace sparsevb
