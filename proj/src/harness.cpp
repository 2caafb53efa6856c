#include "sparsevb/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>
#include <stdexcept>

#include "sparsevb/errors.hpp"
#include "sparsevb/format.hpp"
#include "sparsevb/summation.hpp"
#include "sparsevb/verify.hpp"

namespace sparsevb {

TargetFunction TargetFunction::cusp(double beta, std::vector<double> center) {
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("cusp target needs beta in (0, 1]");
  if (center.empty()) throw std::invalid_argument("cusp target needs a center");
  TargetFunction f;
  f.family_ = TargetFamily::Cusp;
  f.beta_ = beta;
  f.dim_ = static_cast<int>(center.size());
  f.params_ = std::move(center);
  return f;
}

TargetFunction TargetFunction::smoothed_cusp(double beta, std::vector<double> center) {
  if (!(beta > 1.0 && beta <= 2.0)) throw std::invalid_argument("smoothed cusp target needs beta in (1, 2]");
  if (center.empty()) throw std::invalid_argument("smoothed cusp target needs a center");
  TargetFunction f;
  f.family_ = TargetFamily::SmoothedCusp;
  f.beta_ = beta;
  f.dim_ = static_cast<int>(center.size());
  f.params_ = std::move(center);
  return f;
}

TargetFunction TargetFunction::trigonometric(std::vector<double> coefficients) {
  if (coefficients.empty()) throw std::invalid_argument("trigonometric target needs coefficients");
  TargetFunction f;
  f.family_ = TargetFamily::Trigonometric;
  f.beta_ = std::numeric_limits<double>::infinity();
  f.dim_ = static_cast<int>(coefficients.size());
  f.params_ = std::move(coefficients);
  return f;
}

TargetFunction TargetFunction::network(Architecture arch, SparseParameter theta) {
  check_parameter(arch, theta);
  TargetFunction f;
  f.family_ = TargetFamily::Network;
  f.beta_ = 1.0;  // piecewise linear, hence Lipschitz
  f.dim_ = arch.input_dim();
  f.params_.assign(theta.theta().begin(), theta.theta().end());
  f.arch_ = std::move(arch);
  f.theta_ = std::move(theta);
  return f;
}

double TargetFunction::operator()(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) throw ShapeError("target evaluated at a point of the wrong dimension");
  switch (family_) {
    case TargetFamily::Cusp: {
      double v = 1.0;
      for (int j = 0; j < dim_; ++j) v *= std::pow(std::abs(x[j] - params_[j]), beta_);
      return v;
    }
    case TargetFamily::SmoothedCusp: {
      double v = 1.0;
      for (int j = 0; j < dim_; ++j) {
        const double u = x[j] - params_[j];
        v *= (u < 0.0 ? -1.0 : 1.0) * std::pow(std::abs(u), beta_) / beta_;
      }
      return v;
    }
    case TargetFamily::Trigonometric: {
      double s = 0.0;
      for (int j = 0; j < dim_; ++j) s += params_[j] * x[j];
      return std::sin(std::numbers::pi * s);
    }
    case TargetFamily::Network:
      return forward(*arch_, theta_, x);
  }
  return 0.0;
}

nlohmann::ordered_json TargetFunction::to_json() const {
  nlohmann::ordered_json j{{"family", to_string(family_)}, {"d", dim_}};
  j["beta"] = std::isfinite(beta_) ? nlohmann::ordered_json(beta_) : nlohmann::ordered_json("inf");
  switch (family_) {
    case TargetFamily::Cusp:
    case TargetFamily::SmoothedCusp: j["center"] = params_; break;
    case TargetFamily::Trigonometric: j["coefficients"] = params_; break;
    case TargetFamily::Network:
      j["arch"] = sparsevb::to_json(*arch_);
      j["theta"] = params_;
      break;
  }
  return j;
}

const char* to_string(TargetFamily f) {
  switch (f) {
    case TargetFamily::Cusp: return "cusp";
    case TargetFamily::SmoothedCusp: return "smoothed_cusp";
    case TargetFamily::Trigonometric: return "trigonometric";
    case TargetFamily::Network: return "network";
  }
  return "?";
}

TargetFamily target_family_from_string(const std::string& s) {
  if (s == "cusp") return TargetFamily::Cusp;
  if (s == "smoothed_cusp") return TargetFamily::SmoothedCusp;
  if (s == "trigonometric") return TargetFamily::Trigonometric;
  if (s == "network") return TargetFamily::Network;
  throw std::invalid_argument("unknown target family '" + s + "'");
}

TargetFunction holder_test_function(TargetFamily family, double beta, int dim, std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("holder_test_function: d must be >= 1");
  Rng rng(seed, "target");
  std::vector<double> p(dim);
  switch (family) {
    case TargetFamily::Cusp:
      for (auto& a : p) a = rng.uniform(-0.5, 0.5);
      return TargetFunction::cusp(beta, std::move(p));
    case TargetFamily::SmoothedCusp:
      for (auto& a : p) a = rng.uniform(-0.5, 0.5);
      return TargetFunction::smoothed_cusp(beta, std::move(p));
    case TargetFamily::Trigonometric:
      for (auto& c : p) c = rng.uniform(0.5, 1.5);
      return TargetFunction::trigonometric(std::move(p));
    case TargetFamily::Network: break;
  }
  throw std::invalid_argument("holder_test_function: network targets are built explicitly");
}

Dataset gen_data(const TargetFunction& f0, std::size_t n, double sigma2, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_data: n must be >= 1");
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("gen_data: sigma2 must be >= 0");
  const Rng root(seed, "data");
  Rng xr = root.child("x"), nr = root.child("noise");
  const int d = f0.dim();
  std::vector<double> xs(n * d), ys(n);
  for (auto& v : xs) v = xr.uniform(-1.0, 1.0);
  const double sd = std::sqrt(sigma2);
  for (std::size_t i = 0; i < n; ++i) {
    const double noise = nr.normal();
    ys[i] = f0(std::span<const double>(xs).subspan(i * d, d)) + sd * noise;
  }
  return Dataset(d, std::move(xs), std::move(ys), sigma2);
}

GeneralizationError generalization_error(const VariationalPosterior& q, const TargetFunction& f0,
                                         std::size_t n_theta, const PointSet& xs, const Rng& rng) {
  if (n_theta < 2) throw std::invalid_argument("generalization_error: n_theta must be >= 2");
  if (xs.size() < 16) throw std::invalid_argument("generalization_error: n_x must be >= 16");
  if (xs.dim() != f0.dim() || f0.dim() != q.arch().input_dim())
    throw ShapeError("generalization_error: dimension mismatch");
  std::vector<double> ref(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) ref[i] = f0(xs.point(i));
  GeneralizationError out;
  out.draws.resize(n_theta);
  const auto draws = static_cast<std::ptrdiff_t>(n_theta);
#pragma omp parallel
  {
    Evaluator ev(q.arch());
    std::vector<double> theta(q.arch().num_coefficients()), noise(q.sparsity());
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < draws; ++k) {
      Rng r = rng.child(static_cast<std::uint64_t>(k));
      sample_variational_into(q, r, theta, noise);
      out.draws[k] = squared_l2_distance(ev, theta, ref, xs);
    }
  }
  const auto me = mean_and_error(out.draws);
  out.estimate = me.mean;
  out.std_error = me.std_error;
  return out;
}

GeneralizationError generalization_error(const VariationalPosterior& q, const TargetFunction& f0,
                                         std::size_t n_theta, std::size_t n_x, const Rng& rng) {
  return generalization_error(q, f0, n_theta, halton_points(f0.dim(), n_x), rng);
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

using Json = nlohmann::json;

void only_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
T get(const Json& j, const std::string& where, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

template <class T>
T require(const Json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  return get<T>(j, where, key, T{});
}

TrainConfig train_from_json(const Json& j) {
  only_keys(j, "train",
            {"optimizer", "step_size", "iterations", "n_samples", "mask_search", "search_count", "restarts",
             "fixed_mask", "init_scale", "init_spread", "eval_samples", "beta1", "beta2", "epsilon"});
  TrainConfig c;
  c.optimizer = optimizer_from_string(get<std::string>(j, "train", "optimizer", to_string(c.optimizer)));
  c.step_size = get(j, "train", "step_size", c.step_size);
  c.iterations = get(j, "train", "iterations", c.iterations);
  c.n_samples = get(j, "train", "n_samples", c.n_samples);
  c.mask_search = mask_search_from_string(get<std::string>(j, "train", "mask_search", to_string(c.mask_search)));
  c.search_count = get(j, "train", "search_count", c.search_count);
  c.restarts = get(j, "train", "restarts", c.restarts);
  c.fixed_mask = get(j, "train", "fixed_mask", c.fixed_mask);
  c.init_scale = get(j, "train", "init_scale", c.init_scale);
  c.init_spread = get(j, "train", "init_spread", c.init_spread);
  c.eval_samples = get(j, "train", "eval_samples", c.eval_samples);
  c.beta1 = get(j, "train", "beta1", c.beta1);
  c.beta2 = get(j, "train", "beta2", c.beta2);
  c.epsilon = get(j, "train", "epsilon", c.epsilon);
  c.validate();
  return c;
}

nlohmann::ordered_json train_to_json(const TrainConfig& c) {
  return {{"optimizer", to_string(c.optimizer)}, {"step_size", c.step_size}, {"iterations", c.iterations},
          {"n_samples", c.n_samples},           {"mask_search", to_string(c.mask_search)},
          {"search_count", c.search_count},     {"restarts", c.restarts},
          {"fixed_mask", c.fixed_mask},         {"init_scale", c.init_scale},
          {"init_spread", c.init_spread},       {"eval_samples", c.eval_samples},
          {"beta1", c.beta1},                   {"beta2", c.beta2},
          {"epsilon", c.epsilon}};
}

ArchitectureSpec arch_from_json(const Json& j) {
  only_keys(j, "architecture",
            {"source", "bound", "S", "L", "D", "width_constant", "sparsity_fraction", "candidates"});
  ArchitectureSpec a;
  const auto src = require<std::string>(j, "architecture", "source");
  a.bound = get(j, "architecture", "bound", a.bound);
  if (!(a.bound >= 2.0)) throw ConfigError("architecture.bound must be >= 2");
  if (src == "explicit") {
    a.source = ArchitectureSpec::Source::Explicit;
    a.sparsity = require<std::size_t>(j, "architecture", "S");
    a.depth = require<int>(j, "architecture", "L");
    a.width = require<int>(j, "architecture", "D");
  } else if (src == "holder") {
    a.source = ArchitectureSpec::Source::Holder;
    a.width_constant = get(j, "architecture", "width_constant", a.width_constant);
    a.sparsity_fraction = get(j, "architecture", "sparsity_fraction", a.sparsity_fraction);
    if (!(a.width_constant > 0.0)) throw ConfigError("architecture.width_constant must be positive");
    if (!(a.sparsity_fraction > 0.0 && a.sparsity_fraction <= 1.0))
      throw ConfigError("architecture.sparsity_fraction must lie in (0, 1]");
  } else if (src == "candidates") {
    a.source = ArchitectureSpec::Source::Candidates;
    const auto& list = j.contains("candidates") ? j.at("candidates") : Json::array();
    if (!list.is_array() || list.size() < 2) throw ConfigError("architecture.candidates needs >= 2 entries");
    for (const auto& c : list) {
      only_keys(c, "architecture.candidates[]", {"S", "L", "D"});
      a.candidates.push_back({require<std::size_t>(c, "candidate", "S"), require<int>(c, "candidate", "L"),
                              require<int>(c, "candidate", "D"), 0.0});
    }
  } else {
    throw ConfigError("architecture.source must be explicit, holder or candidates");
  }
  return a;
}

nlohmann::ordered_json arch_to_json(const ArchitectureSpec& a) {
  nlohmann::ordered_json j;
  j["bound"] = a.bound;
  switch (a.source) {
    case ArchitectureSpec::Source::Explicit:
      j["source"] = "explicit";
      j["S"] = a.sparsity;
      j["L"] = a.depth;
      j["D"] = a.width;
      break;
    case ArchitectureSpec::Source::Holder:
      j["source"] = "holder";
      j["width_constant"] = a.width_constant;
      j["sparsity_fraction"] = a.sparsity_fraction;
      break;
    case ArchitectureSpec::Source::Candidates: {
      j["source"] = "candidates";
      auto arr = nlohmann::ordered_json::array();
      for (const auto& c : a.candidates) arr.push_back({{"S", c.sparsity}, {"L", c.depth}, {"D", c.width}});
      j["candidates"] = std::move(arr);
      break;
    }
  }
  return j;
}

std::string fnv_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

TargetFunction make_target(const nlohmann::json& spec) {
  try {
    only_keys(spec, "target", {"family", "beta", "d", "center", "coefficients", "seed", "arch", "theta"});
    const auto family = target_family_from_string(require<std::string>(spec, "target", "family"));
    if (family == TargetFamily::Network) {
      auto arch = architecture_from_json(spec.at("arch"));
      auto theta = require<std::vector<double>>(spec, "target", "theta");
      return TargetFunction::network(std::move(arch), SparseParameter::from_values(std::move(theta)));
    }
    const double beta = family == TargetFamily::Trigonometric ? 0.0 : require<double>(spec, "target", "beta");
    const char* key = family == TargetFamily::Trigonometric ? "coefficients" : "center";
    if (spec.contains(key)) {
      auto p = require<std::vector<double>>(spec, "target", key);
      if (family == TargetFamily::Cusp) return TargetFunction::cusp(beta, std::move(p));
      if (family == TargetFamily::SmoothedCusp) return TargetFunction::smoothed_cusp(beta, std::move(p));
      return TargetFunction::trigonometric(std::move(p));
    }
    return holder_test_function(family, beta, require<int>(spec, "target", "d"),
                                get<std::uint64_t>(spec, "target", "seed", 0));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("target: ") + e.what());
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("target: ") + e.what());
  }
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  return {{"seed", seed},
          {"alpha", alpha},
          {"sigma2", sigma2},
          {"target", make_target(target).to_json()},
          {"n_grid", n_grid},
          {"seeds_per_n", seeds_per_n},
          {"architecture", arch_to_json(architecture)},
          {"slab", sparsevb::to_string(slab)},
          {"train", train_to_json(train)},
          {"gen_error", {{"n_theta", gen_theta}, {"n_x", gen_x}}},
          {"study", study}};
}

std::string ExperimentConfig::digest() const { return fnv_hex(to_json().dump()); }

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  only_keys(j, "config",
            {"seed", "alpha", "sigma2", "target", "n_grid", "seeds_per_n", "architecture", "slab", "train",
             "gen_error", "study"});
  ExperimentConfig c;
  c.seed = get(j, "config", "seed", c.seed);
  c.alpha = get(j, "config", "alpha", c.alpha);
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("config.alpha must lie in (0, 1)");
  c.sigma2 = get(j, "config", "sigma2", c.sigma2);
  if (!(c.sigma2 > 0.0)) throw ConfigError("config.sigma2 must be positive");
  if (!j.contains("target")) throw ConfigError("config: missing key 'target'");
  c.target = j.at("target");
  (void)make_target(c.target);
  c.n_grid = require<std::vector<std::size_t>>(j, "config", "n_grid");
  if (c.n_grid.empty()) throw ConfigError("config.n_grid must not be empty");
  for (std::size_t i = 0; i < c.n_grid.size(); ++i) {
    if (c.n_grid[i] < 2) throw ConfigError("config.n_grid entries must be >= 2");
    if (i > 0 && c.n_grid[i] <= c.n_grid[i - 1]) throw ConfigError("config.n_grid must be strictly increasing");
  }
  c.seeds_per_n = get(j, "config", "seeds_per_n", c.seeds_per_n);
  if (c.seeds_per_n < 1) throw ConfigError("config.seeds_per_n must be >= 1");
  if (!j.contains("architecture")) throw ConfigError("config: missing key 'architecture'");
  c.architecture = arch_from_json(j.at("architecture"));
  try {
    c.slab = slab_family_from_string(get<std::string>(j, "config", "slab", "gaussian"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config.slab: ") + e.what());
  }
  if (j.contains("train")) c.train = train_from_json(j.at("train"));
  if (j.contains("gen_error")) {
    const auto& g = j.at("gen_error");
    only_keys(g, "gen_error", {"n_theta", "n_x"});
    c.gen_theta = get(g, "gen_error", "n_theta", c.gen_theta);
    c.gen_x = get(g, "gen_error", "n_x", c.gen_x);
  }
  if (c.gen_theta < 2 || c.gen_x < 16) throw ConfigError("gen_error: n_theta >= 2 and n_x >= 16 required");
  c.study = get<std::string>(j, "config", "study", c.study);
  if (c.study != "rate" && c.study != "select") throw ConfigError("config.study must be rate or select");
  if (c.study == "select" && c.architecture.source != ArchitectureSpec::Source::Candidates)
    throw ConfigError("a select study needs architecture.source = candidates");
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Studies

ShrunkArchitecture shrink_architecture(std::size_t n, int dim, double beta, double width_constant,
                                       double sparsity_fraction) {
  const auto h = holder_architecture_formula(n, dim, beta, width_constant);
  ShrunkArchitecture s;
  s.original = h;
  s.depth = std::max(3, (h.depth + 7) / 8);
  s.width = std::max(dim, h.width);
  const double T = static_cast<double>(coefficient_count(dim, s.depth, s.width));
  s.sparsity = static_cast<std::size_t>(std::max(1.0, std::min(h.max_sparsity, std::floor(sparsity_fraction * T))));
  return s;
}

std::pair<double, double> fit_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_slope: need matching inputs, n >= 2");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double slope = sxy / sxx;
  if (x.size() < 3) return {slope, std::numeric_limits<double>::quiet_NaN()};
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - my - slope * (x[i] - mx);
    rss += r * r;
  }
  return {slope, std::sqrt(rss / (n - 2.0) / sxx)};
}

namespace {

struct CellSetup {
  Architecture arch;
  std::size_t sparsity;
};

CellSetup rate_cell_architecture(const ExperimentConfig& cfg, const TargetFunction& f0, std::size_t n) {
  const auto& a = cfg.architecture;
  if (a.source == ArchitectureSpec::Source::Explicit)
    return {Architecture(f0.dim(), a.depth, a.width, a.bound), a.sparsity};
  if (a.source != ArchitectureSpec::Source::Holder) throw ConfigError("rate study needs an explicit or holder architecture");
  if (!std::isfinite(f0.beta())) throw ConfigError("holder sizing needs a finite smoothness");
  const auto s = shrink_architecture(n, f0.dim(), f0.beta(), a.width_constant, a.sparsity_fraction);
  return {Architecture(f0.dim(), s.depth, s.width, a.bound), s.sparsity};
}

}  // namespace

RateStudyReport rate_study(const ExperimentConfig& cfg) {
  if (cfg.n_grid.size() < 4) throw ConfigError("rate study needs at least 4 sample sizes");
  if (cfg.seeds_per_n < 3) throw ConfigError("rate study needs at least 3 seeds per n");
  const auto f0 = make_target(cfg.target);
  const auto xs = halton_points(f0.dim(), cfg.gen_x);
  const Rng root(cfg.seed, "rate_study");
  const double beta = f0.beta();

  RateStudyReport rep;
  rep.n_grid = cfg.n_grid;
  rep.config_digest = cfg.digest();
  rep.theoretical_slope = std::isfinite(beta) ? -2.0 * beta / (2.0 * beta + f0.dim()) : -1.0;
  const std::size_t ns = cfg.n_grid.size(), seeds = cfg.seeds_per_n;
  rep.rows.resize(ns * seeds);
  const auto cells = static_cast<std::ptrdiff_t>(ns * seeds);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < cells; ++c) {
    const std::size_t in = static_cast<std::size_t>(c) / seeds, s = static_cast<std::size_t>(c) % seeds;
    const std::size_t n = cfg.n_grid[in];
    const Rng cell = root.child(n).child(s);
    RateRow& row = rep.rows[c];
    row.n = n;
    row.seed = s;
    row.failed = false;
    try {
      const auto setup = rate_cell_architecture(cfg, f0, n);
      row.sparsity = setup.sparsity;
      row.depth = setup.arch.depth();
      row.width = setup.arch.width();
      row.rate_formula = rate(setup.arch, setup.sparsity, n, cfg.slab).value;
      row.minimax = minimax_rate(std::isfinite(beta) ? beta : 1.0, f0.dim(), static_cast<double>(n));
      const auto data = gen_data(f0, n, cfg.sigma2, Rng(cell.child("data")).next_u64());
      TrainConfig tc = cfg.train;
      tc.seed = Rng(cell.child("train")).next_u64();
      const SpikeSlabPrior prior(setup.arch, setup.sparsity, cfg.slab);
      const auto fit_result = fit(data, prior, cfg.alpha, tc);
      row.elbo = fit_result.trace.final_evaluation.value;
      row.kl_term = fit_result.trace.final_evaluation.kl_term;
      auto ge = generalization_error(fit_result.posterior, f0, cfg.gen_theta, xs, cell.child("gen_error"));
      row.gen_error = ge.estimate;
      row.gen_error_se = ge.std_error;
      row.draws = std::move(ge.draws);
    } catch (const std::exception& e) {
      row.failed = true;
      row.failure = e.what();
    }
  }

  rep.failures = 0;
  std::vector<double> lx, ly;
  for (std::size_t in = 0; in < ns; ++in) {
    std::vector<double> errs;
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto& row = rep.rows[in * seeds + s];
      if (row.failed) {
        ++rep.failures;
        continue;
      }
      errs.push_back(row.gen_error);
    }
    const double mean = errs.empty() ? std::numeric_limits<double>::quiet_NaN()
                                     : pairwise_sum(errs) / static_cast<double>(errs.size());
    rep.mean_error.push_back(mean);
    if (std::isfinite(mean) && mean > 0.0) {
      lx.push_back(std::log(static_cast<double>(cfg.n_grid[in])));
      ly.push_back(std::log(mean));
    }
  }
  if (lx.size() >= 2) {
    std::tie(rep.slope, rep.slope_se) = fit_slope(lx, ly);
  } else {
    rep.slope = rep.slope_se = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

void RateStudyReport::write_csv(std::ostream& out) const {
  out << "n,seed,S,L,D,elbo,kl_term,gen_error,gen_error_se,rate_formula,minimax_rate\n";
  for (const auto& r : rows) {
    out << r.n << ',' << r.seed << ',' << r.sparsity << ',' << r.depth << ',' << r.width << ',';
    if (r.failed) {
      out << "nan,nan,nan,nan,";
    } else {
      out << format_double(r.elbo) << ',' << format_double(r.kl_term) << ',' << format_double(r.gen_error) << ','
          << format_double(r.gen_error_se) << ',';
    }
    out << format_double(r.rate_formula) << ',' << format_double(r.minimax) << '\n';
  }
}

namespace {

nlohmann::ordered_json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

nlohmann::ordered_json RateStudyReport::to_json() const {
  auto per_n = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < n_grid.size(); ++i)
    per_n.push_back({{"n", n_grid[i]}, {"mean_gen_error", finite_or_null(mean_error[i])}});
  auto failed = nlohmann::ordered_json::array();
  for (const auto& r : rows)
    if (r.failed) failed.push_back({{"n", r.n}, {"seed", r.seed}, {"error", r.failure}});
  return {{"config_digest", config_digest},
          {"norm", "unnormalized Lebesgue L2 on [-1,1]^d"},
          {"per_n", std::move(per_n)},
          {"slope", finite_or_null(slope)},
          {"slope_se", finite_or_null(slope_se)},
          {"theoretical_slope", theoretical_slope},
          {"failures", failures},
          {"failed_cells", std::move(failed)}};
}

SelectionReport select_study(const ExperimentConfig& cfg) {
  if (cfg.architecture.source != ArchitectureSpec::Source::Candidates)
    throw ConfigError("select study needs architecture.source = candidates");
  const auto& manifest = cfg.architecture.candidates;
  if (manifest.size() < 2) throw ConfigError("select study needs at least 2 candidates");
  const auto f0 = make_target(cfg.target);
  const auto xs = halton_points(f0.dim(), cfg.gen_x);
  const std::size_t n = cfg.n_grid.front();
  const Rng root(cfg.seed, "select_study");
  const ArchPriorBelief belief{f0.dim()};

  SelectionReport rep;
  rep.manifest = manifest;
  rep.config_digest = cfg.digest();
  const std::size_t seeds = cfg.seeds_per_n, m = manifest.size();
  std::vector<double> elbos(seeds * m), errors(seeds * m);
  std::vector<char> failed(seeds * m, 0);
  std::vector<Dataset> data;
  for (std::size_t s = 0; s < seeds; ++s)
    data.push_back(gen_data(f0, n, cfg.sigma2, Rng(root.child(s).child("data")).next_u64()));
  const auto cells = static_cast<std::ptrdiff_t>(seeds * m);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < cells; ++c) {
    const std::size_t s = static_cast<std::size_t>(c) / m, k = static_cast<std::size_t>(c) % m;
    const Rng cell = root.child(s).child(k);
    try {
      const auto& cand = manifest[k];
      const SpikeSlabPrior prior(Architecture(f0.dim(), cand.depth, cand.width, cfg.architecture.bound),
                                 cand.sparsity, cfg.slab);
      TrainConfig tc = cfg.train;
      tc.seed = Rng(cell.child("train")).next_u64();
      const auto res = fit(data[s], prior, cfg.alpha, tc);
      elbos[c] = res.trace.final_evaluation.value;
      errors[c] = generalization_error(res.posterior, f0, cfg.gen_theta, xs, cell.child("gen_error")).estimate;
    } catch (const std::exception&) {
      failed[c] = 1;
    }
  }
  for (std::size_t s = 0; s < seeds; ++s) {
    SelectionRun run;
    run.seed = s;
    std::vector<Candidate> cands;
    std::vector<std::size_t> index;
    for (std::size_t k = 0; k < m; ++k) {
      run.failed.push_back(failed[s * m + k] != 0);
      run.gen_error.push_back(errors[s * m + k]);
      if (failed[s * m + k]) continue;
      Candidate c = manifest[k];
      c.elbo = elbos[s * m + k];
      cands.push_back(c);
      index.push_back(k);
    }
    if (cands.empty()) throw std::runtime_error("select study: every candidate failed for seed " + std::to_string(s));
    auto sel = penalized_elbo_select(cands, belief);
    sel.index = index[sel.index];
    run.selection = std::move(sel);
    rep.runs.push_back(std::move(run));
  }
  return rep;
}

void SelectionReport::write_csv(std::ostream& out) const {
  out << "seed,S,L,D,T,elbo,log_inv_prior,penalized_score,selected,gen_error\n";
  for (const auto& run : runs) {
    std::size_t row = 0;
    for (std::size_t k = 0; k < manifest.size(); ++k) {
      if (run.failed[k]) continue;
      const auto& r = run.selection.table[row++];
      out << run.seed << ',' << r.candidate.sparsity << ',' << r.candidate.depth << ',' << r.candidate.width << ','
          << r.num_coefficients << ',' << format_double(r.candidate.elbo) << ',' << format_double(r.log_inv_prior)
          << ',' << format_double(r.penalized_score) << ',' << (r.selected ? 1 : 0) << ','
          << format_double(run.gen_error[k]) << '\n';
    }
  }
}

nlohmann::ordered_json SelectionReport::to_json() const {
  auto runs_j = nlohmann::ordered_json::array();
  for (const auto& run : runs) {
    const auto& c = manifest[run.selection.index];
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < manifest.size(); ++k)
      if (!run.failed[k]) best = std::min(best, run.gen_error[k]);
    runs_j.push_back({{"seed", run.seed},
                      {"selected", {{"S", c.sparsity}, {"L", c.depth}, {"D", c.width}}},
                      {"selected_gen_error", run.gen_error[run.selection.index]},
                      {"best_gen_error", best}});
  }
  return {{"config_digest", config_digest}, {"runs", std::move(runs_j)}};
}

}  // namespace sparsevb
