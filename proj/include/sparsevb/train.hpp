#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "sparsevb/arch.hpp"
#include "sparsevb/elbo.hpp"
#include "sparsevb/spikeslab.hpp"

namespace sparsevb {

enum class Optimizer { GradientAscent, AdaptiveMoments };
enum class MaskSearch { FixedMask, RandomRestarts, MagnitudePrune };

struct TrainConfig {
  Optimizer optimizer = Optimizer::AdaptiveMoments;
  double step_size = 1e-2;
  std::size_t iterations = 1000;  // K, per mask phase
  std::size_t n_samples = 32;
  std::uint64_t seed = 0;
  MaskSearch mask_search = MaskSearch::MagnitudePrune;
  // RandomRestarts: number of masks drawn. MagnitudePrune: re-masking rounds.
  std::size_t search_count = 2;
  // Independent repetitions of MagnitudePrune from different initializations.
  std::size_t restarts = 1;
  std::vector<std::size_t> fixed_mask;  // FixedMask only
  double init_scale = 0.1;   // sd of initial centers / means
  double init_spread = 0.1;  // initial half-width / sd
  std::size_t eval_samples = 1024;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct TraceRecord {
  std::size_t k;
  std::size_t sparsity;  // active coordinates in this phase
  double elbo;
  double std_error;
  double kl_term;
  double seconds;  // wall clock since the start of the run
};

struct TrainTrace {
  std::vector<TraceRecord> records;
  // Running maximum over records at the target sparsity (-inf before the first).
  std::vector<double> best_so_far;
  std::size_t target_sparsity = 0;
  std::size_t restart = 0;        // which restart produced the returned posterior
  ElboEstimate final_evaluation;  // returned posterior at eval_samples

  double best_elbo() const;
  // ELBO recorded at the final iterate of the target-sparsity phase.
  double final_elbo() const;
  void append(const TraceRecord& r);
};

// One JSON object per iteration: k, elbo, std_error, kl_term and, when
// with_timestamps is set, timestamp (seconds since start).
void write_jsonl(std::ostream& out, const TrainTrace& trace, bool with_timestamps = true);

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, TrainTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const TrainTrace& last_finite_trace() const { return trace_; }

 private:
  TrainTrace trace_;
};

struct FitResult {
  VariationalPosterior posterior;
  TrainTrace trace;
};

// Maximizes the tempered ELBO over slab parameters with the mask held fixed at
// the mask of q0, starting from q0.
FitResult optimize(const Dataset& data, const VariationalPosterior& q0, const SpikeSlabPrior& prior,
                   double alpha, const TrainConfig& cfg);

// Initial posterior on a given mask: centers N(0, init_scale^2), spreads init_spread.
VariationalPosterior initial_posterior(const Architecture& arch, std::vector<std::size_t> active,
                                       SlabFamily family, const TrainConfig& cfg, Rng& rng);

// Full fit including the mask search; prior fixes (arch, S, slab family).
FitResult fit(const Dataset& data, const SpikeSlabPrior& prior, double alpha, const TrainConfig& cfg);

// proxy - ELBO at the final iterate, floored at zero. The proxy must dominate
// the best recorded ELBO to within four pooled standard errors of the records.
double elbo_gap(const TrainTrace& trace, double elbo_star_proxy);

double consistency_bound(double approx_error, const RateReport& rate, double alpha, double sigma2, double gap,
                         std::size_t n);

const char* to_string(Optimizer o);
const char* to_string(MaskSearch m);
Optimizer optimizer_from_string(const std::string& s);
MaskSearch mask_search_from_string(const std::string& s);

}  // namespace sparsevb
