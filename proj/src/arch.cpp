#include "sparsevb/arch.hpp"

#include <algorithm>
#include <bit>
#include <climits>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "sparsevb/format.hpp"

namespace sparsevb {

namespace {

int floor_log2(std::size_t n) { return static_cast<int>(std::bit_width(n)) - 1; }

int ceil_log2(int d) { return d <= 1 ? 0 : static_cast<int>(std::bit_width(static_cast<unsigned>(d - 1))); }

}  // namespace

HolderArchitecture holder_architecture(std::size_t n, int input_dim, double beta, double width_constant) {
  if (!(beta > 0.0) || !(beta < input_dim))
    throw std::invalid_argument("holder_architecture: requires 0 < beta < d");
  return holder_architecture_formula(n, input_dim, beta, width_constant);
}

HolderArchitecture holder_architecture_formula(std::size_t n, int input_dim, double beta, double width_constant) {
  if (input_dim < 1) throw std::invalid_argument("holder_architecture: d must be >= 1");
  if (!(beta > 0.0)) throw std::invalid_argument("holder_architecture: beta must be positive");
  if (n < 2) throw std::invalid_argument("holder_architecture: n must be >= 2");
  if (!(width_constant > 0.0)) throw std::invalid_argument("holder_architecture: C_D must be positive");
  const double d = input_dim;
  const int lg = ceil_log2(input_dim);
  const int depth = 8 + (floor_log2(n) + 5) * (1 + lg);
  const double nn = static_cast<double>(n);
  const double inner = std::floor(std::pow(nn, d / (2.0 * beta + d)) / std::log(nn));
  const int width = std::max(input_dim, static_cast<int>(std::floor(width_constant * inner)));
  const double smax = std::floor(94.0 * d * d * std::pow(beta + 1.0, 2.0 * d) * width * (depth + lg));
  return {depth, width, smax};
}

RateReport rate(const Architecture& arch, std::size_t sparsity, std::size_t sample_size, SlabFamily variant) {
  if (sparsity < 1 || sample_size < 1) throw std::invalid_argument("rate: S and n must be >= 1");
  const double S = static_cast<double>(sparsity), n = static_cast<double>(sample_size);
  const double L = arch.depth(), D = arch.width(), B = arch.bound(), d = arch.input_dim();
  const double ratio = std::max(n / S, 1.0);
  std::vector<double> c;
  if (variant == SlabFamily::Uniform) {
    c = {L * S / n * std::log(B * D), 2.0 * S / n * std::log(B * L * D), S / n * std::log(7.0 * d * L * ratio)};
  } else {
    c = {S * L / n * std::log(2.0 * B * D), S / (4.0 * n) * (12.0 * std::log(L * D) + B * B),
         S / n * std::log(11.0 * d * ratio)};
  }
  const double value = c[0] + c[1] + c[2];
  return {value, std::move(c), variant, sparsity, sample_size, arch.input_dim(), arch.depth(), arch.width(), B};
}

double minimax_rate(double beta, int input_dim, double n) {
  if (!(beta > 0.0) || input_dim < 1 || !(n >= 2.0)) throw std::invalid_argument("minimax_rate: bad arguments");
  const double ln = std::log(n);
  return std::pow(n, -2.0 * beta / (2.0 * beta + input_dim)) * ln * ln;
}

int width_support_max(int depth, int input_dim) {
  const double e = std::floor(std::exp(static_cast<double>(depth)));
  const int cap = e >= static_cast<double>(INT_MAX) ? INT_MAX : static_cast<int>(e);
  return std::max(cap, input_dim);
}

double prior_belief_logmass(std::size_t sparsity, int depth, int width, int input_dim) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (depth < 1 || input_dim < 1) return kNegInf;
  const int dmax = width_support_max(depth, input_dim);
  if (width < input_dim || width > dmax) return kNegInf;
  const std::size_t T = coefficient_count(input_dim, depth, width);
  if (sparsity < 1 || sparsity > T) return kNegInf;
  return -depth * std::log(2.0) - std::log(static_cast<double>(dmax - input_dim + 1)) -
         std::log(static_cast<double>(T));
}

double ArchPriorBelief::logmass(std::size_t sparsity, int depth, int width) const {
  if (depth > max_depth) return -std::numeric_limits<double>::infinity();
  return prior_belief_logmass(sparsity, depth, width, input_dim);
}

PenaltyCheck penalty_bound_check(std::size_t sparsity, int depth, int width, int input_dim, double n) {
  if (!(n > 0.0)) throw std::invalid_argument("penalty_bound_check: n must be positive");
  const double lhs = -prior_belief_logmass(sparsity, depth, width, input_dim) / n;
  const double L = depth;
  const double rhs =
      (2.0 * std::log(width + 1.0) + std::log(L) + std::max(L, std::log(static_cast<double>(input_dim))) +
       L * std::log(2.0)) /
      n;
  return {lhs <= rhs, lhs, rhs};
}

Selection penalized_elbo_select(const std::vector<Candidate>& candidates, const ArchPriorBelief& belief,
                                bool use_penalty) {
  if (candidates.empty()) throw std::invalid_argument("penalized_elbo_select: empty candidate list");
  Selection out;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (!std::isfinite(c.elbo)) throw std::invalid_argument("penalized_elbo_select: non-finite ELBO");
    ScoreRow row{c, coefficient_count(belief.input_dim, c.depth, c.width),
                 belief.log_inverse(c.sparsity, c.depth, c.width), 0.0, false};
    row.penalized_score = use_penalty ? c.elbo - row.log_inv_prior : c.elbo;
    out.table.push_back(row);
    if (!std::isfinite(row.penalized_score)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = out.table[*best];
    const bool better = row.penalized_score > b.penalized_score ||
                        (row.penalized_score == b.penalized_score &&
                         (row.num_coefficients < b.num_coefficients ||
                          (row.num_coefficients == b.num_coefficients &&
                           c.sparsity < b.candidate.sparsity)));
    if (better) best = i;
  }
  if (!best) throw std::invalid_argument("penalized_elbo_select: no candidate inside the prior support");
  out.index = *best;
  out.table[*best].selected = true;
  return out;
}

void write_score_csv(std::ostream& out, const std::vector<ScoreRow>& table) {
  out << "S,L,D,T,elbo,log_inv_prior,penalized_score,selected\n";
  for (const auto& r : table) {
    out << r.candidate.sparsity << ',' << r.candidate.depth << ',' << r.candidate.width << ','
        << r.num_coefficients << ',' << format_double(r.candidate.elbo) << ',' << format_double(r.log_inv_prior)
        << ',' << format_double(r.penalized_score) << ',' << (r.selected ? 1 : 0) << '\n';
  }
}

}  // namespace sparsevb
