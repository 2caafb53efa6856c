#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include "sparsevb/net.hpp"
#include "sparsevb/spikeslab.hpp"

namespace sparsevb {

struct HolderArchitecture {
  int depth;
  int width;
  double max_sparsity;  // S_max; may exceed the range of std::size_t only in theory
};

// Depth, width and sparsity budget for a beta-Holder target on [-1,1]^d.
// Requires 0 < beta < d, n >= 2, width_constant > 0.
HolderArchitecture holder_architecture(std::size_t n, int input_dim, double beta, double width_constant);
// Same formulas for any beta > 0. Used by studies whose target sits at the
// boundary beta = d, outside the range the sizing rule is stated for.
HolderArchitecture holder_architecture_formula(std::size_t n, int input_dim, double beta, double width_constant);

struct RateReport {
  double value;
  std::vector<double> components;
  SlabFamily variant;
  std::size_t sparsity;
  std::size_t sample_size;
  int input_dim;
  int depth;
  int width;
  double bound;
};

RateReport rate(const Architecture& arch, std::size_t sparsity, std::size_t sample_size, SlabFamily variant);

// n^{-2 beta / (2 beta + d)} (log n)^2.
double minimax_rate(double beta, int input_dim, double n);

// Upper end of the width support given depth L: max(floor(e^L), d).
int width_support_max(int depth, int input_dim);

// log pi_{S,L,D}; -infinity when (S, L, D) is outside the support.
double prior_belief_logmass(std::size_t sparsity, int depth, int width, int input_dim);

struct ArchPriorBelief {
  int input_dim;
  int max_depth = 16;

  double logmass(std::size_t sparsity, int depth, int width) const;
  double log_inverse(std::size_t sparsity, int depth, int width) const { return -logmass(sparsity, depth, width); }
};

struct PenaltyCheck {
  bool holds;
  double lhs;  // log(1/pi) / n
  double rhs;
};

PenaltyCheck penalty_bound_check(std::size_t sparsity, int depth, int width, int input_dim, double n);

struct Candidate {
  std::size_t sparsity;
  int depth;
  int width;
  double elbo;
};

struct ScoreRow {
  Candidate candidate;
  std::size_t num_coefficients;
  double log_inv_prior;
  double penalized_score;
  bool selected;
};

struct Selection {
  std::size_t index;  // into the candidate list
  std::vector<ScoreRow> table;
};

// argmax of elbo - log(1/pi); exact ties go to the smallest T, then the smallest S.
// With use_penalty = false the prior term is dropped (diagnostic only).
Selection penalized_elbo_select(const std::vector<Candidate>& candidates, const ArchPriorBelief& belief,
                                bool use_penalty = true);

// Columns: S, L, D, T, elbo, log_inv_prior, penalized_score, selected.
void write_score_csv(std::ostream& out, const std::vector<ScoreRow>& table);

}  // namespace sparsevb
