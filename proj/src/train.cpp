#include "sparsevb/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>

#include <json.hpp>

#include "sparsevb/errors.hpp"

namespace sparsevb {

void TrainConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("train: step_size must be positive");
  if (n_samples < 2) throw ConfigError("train: n_samples must be >= 2");
  if (eval_samples < 2) throw ConfigError("train: eval_samples must be >= 2");
  if (restarts < 1) throw ConfigError("train: restarts must be >= 1");
  if (mask_search == MaskSearch::RandomRestarts && search_count < 1)
    throw ConfigError("train: RandomRestarts needs a positive count");
  if (!(init_scale >= 0.0) || !(init_spread > 0.0)) throw ConfigError("train: bad initialization scales");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
    throw ConfigError("train: bad moment parameters");
}

double TrainTrace::best_elbo() const {
  return best_so_far.empty() ? -std::numeric_limits<double>::infinity() : best_so_far.back();
}

double TrainTrace::final_elbo() const {
  for (auto it = records.rbegin(); it != records.rend(); ++it)
    if (it->sparsity == target_sparsity) return it->elbo;
  throw std::invalid_argument("trace has no iterate at the target sparsity");
}

void TrainTrace::append(const TraceRecord& r) {
  records.push_back(r);
  double best = best_elbo();
  if (r.sparsity == target_sparsity) best = std::max(best, r.elbo);
  best_so_far.push_back(best);
}

void write_jsonl(std::ostream& out, const TrainTrace& trace, bool with_timestamps) {
  for (const auto& r : trace.records) {
    nlohmann::ordered_json j{{"k", r.k}, {"S", r.sparsity}, {"elbo", r.elbo}, {"std_error", r.std_error},
                             {"kl_term", r.kl_term}};
    if (with_timestamps) j["timestamp"] = r.seconds;
    out << j.dump() << '\n';
  }
}

namespace {

using Clock = std::chrono::steady_clock;

struct RunState {
  TrainTrace trace;
  std::size_t k = 0;
  Clock::time_point start = Clock::now();
};

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Runs cfg.iterations optimizer steps on the mask of q; draws for step k come
// from steps.child(k) with k counted across the whole run.
VariationalPosterior run_phase(const Dataset& data, VariationalPosterior q, const SpikeSlabPrior& prior,
                               double alpha, const TrainConfig& cfg, const Rng& steps, RunState& state) {
  if (cfg.iterations == 0) return q;
  std::vector<double> p = slab_parameters(q);
  std::vector<double> m(p.size(), 0.0), v(p.size(), 0.0);
  const double bound = prior.arch.bound();
  for (std::size_t it = 0; it < cfg.iterations; ++it, ++state.k) {
    const auto g = elbo_gradient(data, q, prior, alpha, cfg.n_samples, steps.child(state.k));
    if (!std::isfinite(g.estimate.value) || !all_finite(g.gradient))
      throw DivergenceError("training diverged at iteration " + std::to_string(state.k) +
                                " (non-finite ELBO or gradient)",
                            state.trace);
    const double secs = std::chrono::duration<double>(Clock::now() - state.start).count();
    state.trace.append({state.k, q.sparsity(), g.estimate.value, g.estimate.std_error, g.estimate.kl_term, secs});
    if (cfg.optimizer == Optimizer::GradientAscent) {
      for (std::size_t c = 0; c < p.size(); ++c) p[c] += cfg.step_size * g.gradient[c];
    } else {
      const double t = static_cast<double>(it + 1);
      const double c1 = 1.0 - std::pow(cfg.beta1, t), c2 = 1.0 - std::pow(cfg.beta2, t);
      for (std::size_t c = 0; c < p.size(); ++c) {
        m[c] = cfg.beta1 * m[c] + (1.0 - cfg.beta1) * g.gradient[c];
        v[c] = cfg.beta2 * v[c] + (1.0 - cfg.beta2) * g.gradient[c] * g.gradient[c];
        p[c] += cfg.step_size * (m[c] / c1) / (std::sqrt(v[c] / c2) + cfg.epsilon);
      }
    }
    project_slab_parameters(q.family(), bound, p);
    if (!all_finite(p))
      throw DivergenceError("training diverged at iteration " + std::to_string(state.k) +
                                " (non-finite parameters)",
                            state.trace);
    q = with_slab_parameters(q, p);
  }
  return q;
}

// Keeps the `keep` active coordinates with the largest |center|, with their slabs.
VariationalPosterior prune(const VariationalPosterior& q, std::size_t keep) {
  const auto centers = q.slab_centers();
  const auto active = q.active();
  std::vector<std::size_t> order(active.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(centers[active[a]]) > std::abs(centers[active[b]]);
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> idx;
  for (auto a : order) idx.push_back(active[a]);
  if (q.family() == SlabFamily::Uniform) {
    std::vector<UniformSlab> s;
    for (auto a : order) s.push_back(q.uniform_slabs()[a]);
    return VariationalPosterior(q.arch(), std::move(idx), std::move(s));
  }
  std::vector<GaussianSlab> s;
  for (auto a : order) s.push_back(q.gaussian_slabs()[a]);
  return VariationalPosterior(q.arch(), std::move(idx), std::move(s));
}

FitResult run_restart(const Dataset& data, const SpikeSlabPrior& prior, double alpha, const TrainConfig& cfg,
                      std::size_t restart) {
  const Rng root = Rng(cfg.seed, "train").child(restart);
  Rng init = root.child("init");
  const Rng steps = root.child("step");
  const std::size_t T = prior.arch.num_coefficients();
  const std::size_t S = prior.sparsity;
  RunState state;
  state.trace.target_sparsity = S;
  state.trace.restart = restart;

  if (cfg.mask_search != MaskSearch::MagnitudePrune) {
    std::vector<std::size_t> mask;
    if (cfg.mask_search == MaskSearch::FixedMask) {
      mask = cfg.fixed_mask;
      if (mask.size() != S) throw ConfigError("train: fixed mask must have exactly S entries");
      std::sort(mask.begin(), mask.end());
    } else {
      mask = root.child("mask").subset(T, S);
    }
    auto q0 = initial_posterior(prior.arch, std::move(mask), prior.family, cfg, init);
    auto q = run_phase(data, std::move(q0), prior, alpha, cfg, steps, state);
    return {std::move(q), std::move(state.trace)};
  }

  std::vector<std::size_t> dense(T);
  std::iota(dense.begin(), dense.end(), 0);
  auto q = initial_posterior(prior.arch, std::move(dense), prior.family, cfg, init);
  const std::size_t rounds = T == S ? 0 : std::max<std::size_t>(cfg.search_count, 1);
  for (std::size_t r = 0; r <= rounds; ++r) {
    // Sparsity falls linearly from T to S over the rounds.
    const std::size_t sr = rounds == 0 ? S : T - (T - S) * r / rounds;
    if (sr < q.sparsity()) q = prune(q, sr);
    const SpikeSlabPrior phase_prior(prior.arch, sr, prior.family);
    q = run_phase(data, std::move(q), phase_prior, alpha, cfg, steps, state);
  }
  return {std::move(q), std::move(state.trace)};
}

}  // namespace

VariationalPosterior initial_posterior(const Architecture& arch, std::vector<std::size_t> active,
                                       SlabFamily family, const TrainConfig& cfg, Rng& rng) {
  const double b = arch.bound();
  if (family == SlabFamily::Uniform) {
    std::vector<UniformSlab> slabs;
    const double w = std::min(cfg.init_spread, b);
    for (std::size_t k = 0; k < active.size(); ++k) {
      const double c = std::clamp(cfg.init_scale * rng.normal(), -b + w, b - w);
      slabs.push_back({c - w, c + w});
    }
    return VariationalPosterior(arch, std::move(active), std::move(slabs));
  }
  std::vector<GaussianSlab> slabs;
  for (std::size_t k = 0; k < active.size(); ++k)
    slabs.push_back({cfg.init_scale * rng.normal(), cfg.init_spread * cfg.init_spread});
  return VariationalPosterior(arch, std::move(active), std::move(slabs));
}

FitResult optimize(const Dataset& data, const VariationalPosterior& q0, const SpikeSlabPrior& prior,
                   double alpha, const TrainConfig& cfg) {
  cfg.validate();
  RunState state;
  state.trace.target_sparsity = q0.sparsity();
  auto q = run_phase(data, q0, prior, alpha, cfg, Rng(cfg.seed, "train").child(0).child("step"), state);
  state.trace.final_evaluation = elbo(data, q, prior, alpha, cfg.eval_samples, Rng(cfg.seed, "train").child("eval"));
  return {std::move(q), std::move(state.trace)};
}

FitResult fit(const Dataset& data, const SpikeSlabPrior& prior, double alpha, const TrainConfig& cfg) {
  cfg.validate();
  if (data.dim() != prior.arch.input_dim()) throw ShapeError("fit: dataset dimension differs from the architecture");
  std::size_t runs = 1;
  if (cfg.mask_search == MaskSearch::RandomRestarts) runs = cfg.search_count;
  if (cfg.mask_search == MaskSearch::MagnitudePrune) runs = cfg.restarts;

  std::vector<std::optional<FitResult>> results(runs);
  std::vector<std::exception_ptr> errors(runs);
  const Rng eval_rng = Rng(cfg.seed, "train").child("eval");
  std::vector<ElboEstimate> evals(runs);
  const auto n_runs = static_cast<std::ptrdiff_t>(runs);
#pragma omp parallel for schedule(dynamic) if (runs > 1)
  for (std::ptrdiff_t r = 0; r < n_runs; ++r) {
    try {
      results[r] = run_restart(data, prior, alpha, cfg, static_cast<std::size_t>(r));
      evals[r] = elbo(data, results[r]->posterior, prior, alpha, cfg.eval_samples, eval_rng);
    } catch (...) {
      errors[r] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::size_t best = 0;
  for (std::size_t r = 1; r < runs; ++r)
    if (evals[r].value > evals[best].value) best = r;
  FitResult out = std::move(*results[best]);
  out.trace.final_evaluation = evals[best];
  return out;
}

double elbo_gap(const TrainTrace& trace, double elbo_star_proxy) {
  // Recorded ELBOs are MC estimates, so domination is checked with a cushion of
  // four pooled standard errors. A single record's own error is a poor guide:
  // the largest estimates tend to come from draws that also understate it.
  const TraceRecord* best = nullptr;
  double ss = 0.0;
  std::size_t count = 0;
  for (const auto& r : trace.records) {
    if (r.sparsity != trace.target_sparsity) continue;
    if (!best || r.elbo > best->elbo) best = &r;
    ss += r.std_error * r.std_error;
    ++count;
  }
  if (!best) throw std::invalid_argument("trace has no iterate at the target sparsity");
  const double pooled = std::sqrt(ss / static_cast<double>(count));
  if (elbo_star_proxy < best->elbo - 4.0 * pooled)
    throw std::invalid_argument("elbo_gap: proxy is below the best recorded ELBO");
  return std::max(0.0, elbo_star_proxy - trace.final_elbo());
}

double consistency_bound(double approx_error, const RateReport& rate, double alpha, double sigma2, double gap,
                         std::size_t n) {
  const double a = 2.0 / (1.0 - alpha);
  return a * approx_error + a * (1.0 + sigma2 / alpha) * rate.value +
         2.0 * sigma2 / (alpha * (1.0 - alpha)) * gap / static_cast<double>(n);
}

const char* to_string(Optimizer o) {
  return o == Optimizer::GradientAscent ? "gradient_ascent" : "adam";
}

const char* to_string(MaskSearch m) {
  switch (m) {
    case MaskSearch::FixedMask: return "fixed";
    case MaskSearch::RandomRestarts: return "random_restarts";
    case MaskSearch::MagnitudePrune: return "magnitude_prune";
  }
  return "?";
}

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "gradient_ascent") return Optimizer::GradientAscent;
  if (s == "adam") return Optimizer::AdaptiveMoments;
  throw ConfigError("unknown optimizer '" + s + "'");
}

MaskSearch mask_search_from_string(const std::string& s) {
  if (s == "fixed") return MaskSearch::FixedMask;
  if (s == "random_restarts") return MaskSearch::RandomRestarts;
  if (s == "magnitude_prune") return MaskSearch::MagnitudePrune;
  throw ConfigError("unknown mask search '" + s + "'");
}

}  // namespace sparsevb
