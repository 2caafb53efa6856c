#include "sparsevb/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "sparsevb/arch.hpp"
#include "sparsevb/errors.hpp"
#include "sparsevb/quadrature.hpp"
#include "sparsevb/summation.hpp"

namespace sparsevb {

namespace {

std::string digest(std::initializer_list<std::span<const double>> parts) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto part : parts) {
    for (double v : part) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
      }
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double ratio(double empirical, double bound) {
  if (bound > 0.0) return empirical / bound;
  return empirical > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

BoundCheckReport compare(std::string name, std::string dig, const std::vector<double>& empirical,
                         const std::vector<double>& bound) {
  BoundCheckReport rep;
  rep.name = std::move(name);
  rep.trials = 1;
  BoundTrial worst{std::move(dig), 1, empirical[0], bound[0]};
  double worst_ratio = -1.0;
  bool violated = false;
  for (std::size_t l = 0; l < empirical.size(); ++l) {
    if (empirical[l] > bound[l] * (1.0 + kBoundTolerance)) violated = true;
    const double r = ratio(empirical[l], bound[l]);
    if (r > worst_ratio) {
      worst_ratio = r;
      worst.layer = static_cast<int>(l) + 1;
      worst.empirical = empirical[l];
      worst.bound = bound[l];
    }
  }
  rep.violations = violated ? 1 : 0;
  rep.max_ratio = worst_ratio;
  rep.records.push_back(std::move(worst));
  return rep;
}

struct LayerDeviation {
  std::vector<double> weights;  // A~_l
  std::vector<double> biases;   // b~_l
};

LayerDeviation layer_deviation(const Architecture& arch, const SparseParameter& p1, const SparseParameter& p2) {
  LayerDeviation out{std::vector<double>(arch.depth(), 0.0), std::vector<double>(arch.depth(), 0.0)};
  for (std::size_t t = 0; t < arch.num_coefficients(); ++t) {
    const auto loc = index_map(arch, t);
    const double diff = std::abs(p1.theta()[t] - p2.theta()[t]);
    auto& slot = loc.kind == CoefficientKind::Weight ? out.weights : out.biases;
    slot[loc.layer - 1] = std::max(slot[loc.layer - 1], diff);
  }
  return out;
}

double lead_constant(const Architecture& arch) {
  const double bd = arch.bound() * arch.width();
  return arch.input_dim() + 1.0 + 1.0 / (bd - 1.0);
}

}  // namespace

void BoundCheckReport::merge(const BoundCheckReport& other) {
  if (name.empty()) name = other.name;
  trials += other.trials;
  violations += other.violations;
  max_ratio = std::max(max_ratio, other.max_ratio);
  records.insert(records.end(), other.records.begin(), other.records.end());
}

nlohmann::ordered_json BoundCheckReport::to_json(bool with_records) const {
  nlohmann::ordered_json j{{"name", name}, {"trials", trials}, {"violations", violations}, {"max_ratio", max_ratio}};
  if (with_records) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : records)
      arr.push_back({{"digest", r.digest}, {"layer", r.layer}, {"empirical", r.empirical}, {"bound", r.bound}});
    j["records"] = std::move(arr);
  }
  return j;
}

std::vector<double> c_bound(const Architecture& arch) {
  const double B = arch.bound(), D = arch.width(), K = lead_constant(arch);
  std::vector<double> out;
  for (int l = 1; l <= arch.depth(); ++l) out.push_back(std::pow(B, l) * std::pow(D, l - 1) * K);
  return out;
}

std::vector<double> perturbation_bound(const Architecture& arch, const SparseParameter& p1,
                                       const SparseParameter& p2) {
  check_parameter(arch, p1);
  check_parameter(arch, p2);
  const double bd = arch.bound() * arch.width(), K = lead_constant(arch);
  const auto dev = layer_deviation(arch, p1, p2);
  std::vector<double> out;
  for (int l = 1; l <= arch.depth(); ++l) {
    double a = 0.0, b = 0.0;
    for (int u = 1; u <= l; ++u) {
      a += dev.weights[u - 1];
      b += std::pow(bd, l - u) * dev.biases[u - 1];
    }
    out.push_back(std::pow(bd, l - 1) * K * a + b);
  }
  return out;
}

std::vector<double> gaussian_perturbation_bound(const Architecture& arch, const SparseParameter& p_star,
                                                const SparseParameter& p) {
  check_parameter(arch, p_star);
  check_parameter(arch, p);
  const double B = arch.bound(), D = arch.width(), K = lead_constant(arch);
  const auto dev = layer_deviation(arch, p_star, p);
  std::vector<double> out;
  for (int l = 1; l <= arch.depth(); ++l) {
    double a = 0.0, b = 0.0;
    for (int u = 1; u <= l; ++u) {
      double prod = 1.0;
      for (int v = u + 1; v <= l; ++v) prod *= B + dev.weights[v - 1];
      a += std::pow(B, u - 1) * prod * dev.weights[u - 1];
      b += std::pow(D, l - u) * prod * dev.biases[u - 1];
    }
    out.push_back(std::pow(D, l - 1) * K * a + b);
  }
  return out;
}

BoundCheckReport check_c_bound(const Architecture& arch, const SparseParameter& theta_star, const PointSet& grid) {
  return compare("c_bound", digest({theta_star.theta()}), layer_sup_magnitude(arch, theta_star, grid),
                 c_bound(arch));
}

BoundCheckReport check_perturbation_bound(const Architecture& arch, const SparseParameter& p1,
                                          const SparseParameter& p2, const PointSet& grid) {
  return compare("perturbation_bound", digest({p1.theta(), p2.theta()}), layer_sup_deviation(arch, p1, p2, grid),
                 perturbation_bound(arch, p1, p2));
}

BoundCheckReport check_gaussian_perturbation_bound(const Architecture& arch, const SparseParameter& p_star,
                                                   const SparseParameter& p, const PointSet& grid) {
  return compare("gaussian_perturbation_bound", digest({p_star.theta(), p.theta()}),
                 layer_sup_deviation(arch, p_star, p, grid), gaussian_perturbation_bound(arch, p_star, p));
}

double squared_l2_distance(Evaluator& ev, std::span<const double> theta, std::span<const double> ref_values,
                           const PointSet& xs) {
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double diff = ev.value(theta, xs.point(i)) - ref_values[i];
    sq[i] = diff * diff;
  }
  return std::ldexp(pairwise_sum(sq) / static_cast<double>(xs.size()), xs.dim());
}

PriorMassCheck check_extended_prior_mass(const Architecture& arch, std::size_t sparsity, std::size_t n,
                                         const SparseParameter& theta_star, SlabFamily variant,
                                         std::size_t n_theta, std::size_t n_x, const Rng& rng) {
  if (n_theta < 2 || n_x < 16) throw std::invalid_argument("check_extended_prior_mass: too few samples");
  const SpikeSlabPrior prior(arch, sparsity, variant);
  const auto radius = sn_radius(arch, sparsity, n, variant);
  const auto q = reference_variational(theta_star, radius, prior);
  const auto xs = halton_points(arch.input_dim(), n_x);
  std::vector<double> ref(xs.size());
  {
    Evaluator ev(arch);
    for (std::size_t i = 0; i < xs.size(); ++i) ref[i] = ev.value(theta_star.theta(), xs.point(i));
  }
  std::vector<double> dev(n_theta);
  const auto draws = static_cast<std::ptrdiff_t>(n_theta);
#pragma omp parallel
  {
    Evaluator ev(arch);
    std::vector<double> theta(arch.num_coefficients()), noise(sparsity);
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < draws; ++k) {
      Rng r = rng.child(static_cast<std::uint64_t>(k));
      sample_variational_into(q, r, theta, noise);
      dev[k] = squared_l2_distance(ev, theta, ref, xs);
    }
  }
  const auto me = mean_and_error(dev);
  const double kl = kl_to_prior(q, prior);
  const double r = rate(arch, sparsity, n, variant).value;
  return {me.mean - 4.0 * me.std_error <= r, kl <= static_cast<double>(n) * r, me.mean, me.std_error, kl, r,
          radius.value};
}

MarkovCheck markov_concentration(std::span<const double> samples, double M) {
  if (samples.empty()) throw std::invalid_argument("markov_concentration: no samples");
  if (!(M > 1.0)) throw std::invalid_argument("markov_concentration: M must exceed 1");
  for (double s : samples)
    if (!(s >= 0.0)) throw std::invalid_argument("markov_concentration: samples must be nonnegative");
  const double n = static_cast<double>(samples.size());
  const double threshold = M * pairwise_sum(samples) / n;
  const auto exceed = std::count_if(samples.begin(), samples.end(), [&](double s) { return s > threshold; });
  const double frac = static_cast<double>(exceed) / n;
  const double p = 1.0 / M;
  const double slack = 3.0 * std::sqrt(p * (1.0 - p) / n);
  return {frac, p, slack, frac <= p + slack};
}

namespace {

std::vector<std::vector<std::size_t>> all_masks(std::size_t T, std::size_t S) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> c(S);
  for (std::size_t i = 0; i < S; ++i) c[i] = i;
  while (true) {
    out.push_back(c);
    std::size_t i = S;
    while (i > 0 && c[i - 1] == T - S + i - 1) --i;
    if (i == 0) break;
    ++c[i - 1];
    for (std::size_t j = i; j < S; ++j) c[j] = c[j - 1] + 1;
  }
  return out;
}

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  std::vector<double> e(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) e[i] = std::exp(v[i] - m);
  return m + std::log(pairwise_sum(e));
}

constexpr double kGaussianRange = 10.0;
constexpr int kOrder = 8;
constexpr double kMaxTensorNodes = 5e7;

struct MaskIntegral {
  std::vector<double> log_values;  // log of weight * prior density * likelihood per node
  double log_integral;
};

// Tensor-product nodes are enumerated in mixed radix, first active coordinate fastest.
void node_theta(const std::vector<std::size_t>& mask, const QuadratureRule& rule, std::size_t node,
                std::vector<double>& theta, double& log_weight) {
  std::fill(theta.begin(), theta.end(), 0.0);
  log_weight = 0.0;
  for (std::size_t a = 0; a < mask.size(); ++a) {
    const std::size_t i = node % rule.size();
    node /= rule.size();
    theta[mask[a]] = rule.nodes[i];
    log_weight += std::log(rule.weights[i]);
  }
}

MaskIntegral integrate_mask(const Dataset& data, const SpikeSlabPrior& prior, double alpha,
                            const std::vector<std::size_t>& mask, const QuadratureRule& rule) {
  const double nodes_d = std::pow(static_cast<double>(rule.size()), static_cast<double>(mask.size()));
  if (nodes_d > kMaxTensorNodes) throw RefusalError("exact_posterior_oracle: tensor grid too large");
  const auto nodes = static_cast<std::ptrdiff_t>(nodes_d);
  const double scale = data.empty() ? 0.0 : alpha / (2.0 * data.noise_variance());
  const double B = prior.arch.bound();
  const double log_uniform = -std::log(2.0 * B);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  MaskIntegral out;
  out.log_values.resize(nodes);
#pragma omp parallel
  {
    Evaluator ev(prior.arch);
    std::vector<double> theta(prior.arch.num_coefficients()), sq(data.size());
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < nodes; ++k) {
      double lw;
      node_theta(mask, rule, static_cast<std::size_t>(k), theta, lw);
      double lp = 0.0;
      for (auto t : mask)
        lp += prior.family == SlabFamily::Uniform ? log_uniform : -half_log_2pi - 0.5 * theta[t] * theta[t];
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double res = data.ys()[i] - ev.value(theta, data.point(i));
        sq[i] = res * res;
      }
      out.log_values[k] = lw + lp - scale * pairwise_sum(sq);
    }
  }
  out.log_integral = log_sum_exp(out.log_values);
  return out;
}

QuadratureRule slab_rule(const SpikeSlabPrior& prior, int resolution) {
  const int panels = (resolution + kOrder - 1) / kOrder;
  const double half = prior.family == SlabFamily::Uniform ? prior.arch.bound() : kGaussianRange;
  return composite_gauss_legendre(-half, half, panels, kOrder);
}

}  // namespace

ExactPosterior exact_posterior_oracle(const Dataset& data, const SpikeSlabPrior& prior, double alpha,
                                      int resolution, const PointSet& grid) {
  const std::size_t T = prior.arch.num_coefficients();
  if (T > 6) throw RefusalError("exact_posterior_oracle: T = " + std::to_string(T) + " exceeds 6");
  if (resolution < 200) throw std::invalid_argument("exact_posterior_oracle: resolution must be >= 200");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("exact_posterior_oracle: alpha must lie in (0,1)");
  if (data.dim() != prior.arch.input_dim()) throw ShapeError("exact_posterior_oracle: dataset dimension mismatch");
  if (!data.empty() && !(data.noise_variance() > 0.0))
    throw std::invalid_argument("exact_posterior_oracle: noise variance must be positive");

  ExactPosterior out;
  out.masks = all_masks(T, prior.sparsity);
  const double log_masks = std::log(static_cast<double>(out.masks.size()));
  auto evaluate = [&](int res, std::vector<MaskIntegral>& parts) {
    const auto rule = slab_rule(prior, res);
    parts.clear();
    std::vector<double> logs;
    for (const auto& m : out.masks) {
      parts.push_back(integrate_mask(data, prior, alpha, m, rule));
      logs.push_back(parts.back().log_integral);
    }
    return log_sum_exp(logs) - log_masks;
  };

  constexpr int kMaxDoublings = 5;
  std::vector<MaskIntegral> coarse, fine;
  int res = resolution;
  double prev = evaluate(res, coarse);
  bool converged = false;
  double current = prev;
  for (int i = 0; i < kMaxDoublings; ++i) {
    res *= 2;
    current = evaluate(res, fine);
    if (std::abs(current - prev) <= 1e-4) {
      converged = true;
      break;
    }
    prev = current;
    std::swap(coarse, fine);
  }
  if (!converged)
    throw ResolutionError("exact_posterior_oracle: log evidence did not settle to 1e-4 by " +
                          std::to_string(res) + " nodes per coordinate");
  out.log_evidence = current;
  out.resolution = res;

  const double log_total = current + log_masks;
  for (const auto& part : fine) out.mask_probabilities.push_back(std::exp(part.log_integral - log_total));

  if (!grid.empty()) {
    if (grid.dim() != prior.arch.input_dim()) throw ShapeError("exact_posterior_oracle: grid dimension mismatch");
    const auto rule = slab_rule(prior, res);
    out.predictive_mean.assign(grid.size(), 0.0);
    for (std::size_t m = 0; m < out.masks.size(); ++m) {
      const auto& part = fine[m];
      const auto nodes = part.log_values.size();
      std::vector<double> w(nodes);
      for (std::size_t k = 0; k < nodes; ++k) w[k] = std::exp(part.log_values[k] - log_total);
      const auto npts = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel
      {
        Evaluator ev(prior.arch);
        std::vector<double> theta(T), terms(nodes);
#pragma omp for schedule(static)
        for (std::ptrdiff_t j = 0; j < npts; ++j) {
          double lw;
          for (std::size_t k = 0; k < nodes; ++k) {
            node_theta(out.masks[m], rule, k, theta, lw);
            terms[k] = w[k] * ev.value(theta, grid.point(static_cast<std::size_t>(j)));
          }
          out.predictive_mean[j] += pairwise_sum(terms);
        }
      }
    }
  }
  return out;
}

nlohmann::ordered_json run_verify_suite(const std::string& suite, std::size_t trials, std::uint64_t seed,
                                        bool& any_violation) {
  const bool all = suite == "all";
  if (!all && suite != "c_bound" && suite != "perturbation" && suite != "gaussian_perturbation" &&
      suite != "prior_mass")
    throw ConfigError("unknown verify suite '" + suite + "'");
  const Architecture arch(2, 4, 3, 2.0);
  const auto grid = sup_grid(2, 4096);
  const std::size_t T = arch.num_coefficients();
  const double B = arch.bound();
  const Rng root(seed, "verify");
  any_violation = false;
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  using Clock = std::chrono::steady_clock;

  auto dense_uniform = [&](Rng& r) {
    std::vector<double> v(T);
    const bool extreme = r.uniform() < 0.25;
    for (auto& x : v) x = extreme ? (r.uniform() < 0.5 ? -B : B) : r.uniform(-B, B);
    return SparseParameter(v, std::vector<std::uint8_t>(T, 1));
  };

  auto run = [&](const std::string& name, auto&& one_trial) {
    const auto start = Clock::now();
    BoundCheckReport rep;
    rep.name = name;
    for (std::size_t i = 0; i < trials; ++i) rep.merge(one_trial(root.child(name).child(i)));
    auto j = rep.to_json();
    j["runtime_seconds"] = std::chrono::duration<double>(Clock::now() - start).count();
    any_violation = any_violation || rep.violations > 0;
    checks.push_back(std::move(j));
  };

  if (all || suite == "c_bound") {
    run("c_bound", [&](Rng r) { return check_c_bound(arch, dense_uniform(r), grid); });
  }
  if (all || suite == "perturbation") {
    run("perturbation_bound", [&](Rng r) {
      const auto p1 = dense_uniform(r);
      std::vector<double> v(p1.theta().begin(), p1.theta().end());
      const double scale = std::pow(10.0, r.uniform(-3.0, 0.5));
      for (auto& x : v) x = std::clamp(x + scale * r.uniform(-1.0, 1.0), -B, B);
      return check_perturbation_bound(arch, p1, SparseParameter(v, std::vector<std::uint8_t>(T, 1)), grid);
    });
  }
  if (all || suite == "gaussian_perturbation") {
    run("gaussian_perturbation_bound", [&](Rng r) {
      const auto ps = dense_uniform(r);
      std::vector<double> v(ps.theta().begin(), ps.theta().end());
      const double sd = std::pow(10.0, r.uniform(-3.0, 0.5));
      for (auto& x : v) x += sd * r.normal();
      return check_gaussian_perturbation_bound(arch, ps, SparseParameter(v, std::vector<std::uint8_t>(T, 1)), grid);
    });
  }
  if (all || suite == "prior_mass") {
    const auto start = Clock::now();
    const Architecture small(1, 3, 2, 2.0);
    std::size_t cells = 0, failures = 0;
    for (auto family : {SlabFamily::Uniform, SlabFamily::Gaussian}) {
      for (std::size_t S : {2, 4, 8}) {
        for (std::size_t n : {100, 1000, 10000}) {
          Rng r = root.child("prior_mass").child(cells);
          const auto active = r.subset(small.num_coefficients(), S);
          std::vector<double> v(small.num_coefficients(), 0.0);
          for (auto t : active) {
            do v[t] = r.uniform(-B, B);
            while (v[t] == 0.0);
          }
          const auto res = check_extended_prior_mass(small, S, n, SparseParameter::from_values(v), family, 256, 256,
                                                     r.child("mc"));
          ++cells;
          if (!res.deviation_ok || !res.kl_ok) ++failures;
        }
      }
    }
    any_violation = any_violation || failures > 0;
    checks.push_back({{"name", "extended_prior_mass"},
                      {"trials", cells},
                      {"violations", failures},
                      {"runtime_seconds", std::chrono::duration<double>(Clock::now() - start).count()}});
  }
  return {{"suite", suite}, {"trials", trials}, {"seed", seed}, {"checks", std::move(checks)}};
}

}  // namespace sparsevb
