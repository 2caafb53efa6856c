#include "sparsevb/spikeslab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "sparsevb/errors.hpp"
#include "sparsevb/quadrature.hpp"

namespace sparsevb {

const char* to_string(SlabFamily family) {
  return family == SlabFamily::Uniform ? "uniform" : "gaussian";
}

SlabFamily slab_family_from_string(const std::string& name) {
  if (name == "uniform") return SlabFamily::Uniform;
  if (name == "gaussian") return SlabFamily::Gaussian;
  throw std::invalid_argument("unknown slab family '" + name + "'");
}

SpikeSlabPrior::SpikeSlabPrior(Architecture arch_, std::size_t sparsity_, SlabFamily family_)
    : arch(std::move(arch_)), sparsity(sparsity_), family(family_) {
  if (sparsity < 1) throw std::invalid_argument("SpikeSlabPrior: sparsity must be >= 1");
  if (sparsity > arch.num_coefficients())
    throw std::invalid_argument("SpikeSlabPrior: sparsity S = " + std::to_string(sparsity) +
                                " exceeds T = " + std::to_string(arch.num_coefficients()));
}

namespace {

void check_active_set(const Architecture& arch, const std::vector<std::size_t>& active,
                      std::size_t slab_count) {
  if (active.size() != slab_count)
    throw std::invalid_argument("VariationalPosterior: one slab per active coordinate required");
  for (std::size_t k = 0; k < active.size(); ++k) {
    if (active[k] >= arch.num_coefficients())
      throw std::out_of_range("VariationalPosterior: active index out of range");
    if (k > 0 && active[k] <= active[k - 1])
      throw std::invalid_argument("VariationalPosterior: active indices must be strictly increasing");
  }
}

}  // namespace

VariationalPosterior::VariationalPosterior(Architecture arch, std::vector<std::size_t> active,
                                           std::vector<UniformSlab> slabs)
    : arch_(std::move(arch)), family_(SlabFamily::Uniform), active_(std::move(active)),
      uniform_(std::move(slabs)) {
  check_active_set(arch_, active_, uniform_.size());
  const double b = arch_.bound();
  for (const auto& s : uniform_) {
    if (!(s.lower <= s.upper)) throw std::invalid_argument("UniformSlab: lower > upper");
    if (s.lower < -b || s.upper > b)
      throw std::invalid_argument("UniformSlab: interval must lie inside [-B, B]");
  }
}

VariationalPosterior::VariationalPosterior(Architecture arch, std::vector<std::size_t> active,
                                           std::vector<GaussianSlab> slabs)
    : arch_(std::move(arch)), family_(SlabFamily::Gaussian), active_(std::move(active)),
      gaussian_(std::move(slabs)) {
  check_active_set(arch_, active_, gaussian_.size());
  for (const auto& s : gaussian_) {
    if (!(s.variance > 0.0) || !std::isfinite(s.mean))
      throw std::invalid_argument("GaussianSlab: variance must be positive and mean finite");
  }
}

std::vector<std::uint8_t> VariationalPosterior::mask() const {
  std::vector<std::uint8_t> m(arch_.num_coefficients(), 0);
  for (auto t : active_) m[t] = 1;
  return m;
}

std::vector<double> VariationalPosterior::slab_centers() const {
  std::vector<double> c(arch_.num_coefficients(), 0.0);
  for (std::size_t k = 0; k < active_.size(); ++k)
    c[active_[k]] = family_ == SlabFamily::Uniform
                        ? 0.5 * (uniform_[k].lower + uniform_[k].upper)
                        : gaussian_[k].mean;
  return c;
}

SparseParameter sample_prior(const SpikeSlabPrior& prior, Rng& rng) {
  const std::size_t T = prior.arch.num_coefficients();
  if (prior.sparsity > T) throw std::invalid_argument("sample_prior: S > T");
  const auto active = rng.subset(T, prior.sparsity);
  std::vector<double> theta(T, 0.0);
  std::vector<std::uint8_t> mask(T, 0);
  const double b = prior.arch.bound();
  for (auto t : active) {
    mask[t] = 1;
    // A slab draw of exactly 0 has probability zero; the mask stays authoritative.
    theta[t] = prior.family == SlabFamily::Uniform ? rng.uniform(-b, b) : rng.normal();
  }
  return SparseParameter(std::move(theta), std::move(mask));
}

void sample_variational_into(const VariationalPosterior& q, Rng& rng, std::span<double> theta,
                             std::span<double> noise) {
  std::fill(theta.begin(), theta.end(), 0.0);
  const auto active = q.active();
  if (q.family() == SlabFamily::Uniform) {
    const auto slabs = q.uniform_slabs();
    for (std::size_t k = 0; k < active.size(); ++k) {
      const double e = rng.uniform();
      noise[k] = e;
      theta[active[k]] = slabs[k].lower + (slabs[k].upper - slabs[k].lower) * e;
    }
  } else {
    const auto slabs = q.gaussian_slabs();
    for (std::size_t k = 0; k < active.size(); ++k) {
      const double e = rng.normal();
      noise[k] = e;
      theta[active[k]] = slabs[k].mean + std::sqrt(slabs[k].variance) * e;
    }
  }
}

SparseParameter sample_variational(const VariationalPosterior& q, Rng& rng) {
  if (q.family() == SlabFamily::Uniform) {
    for (const auto& s : q.uniform_slabs())
      if (!(s.upper > s.lower)) throw std::invalid_argument("sample_variational: degenerate interval");
  }
  const std::size_t T = q.arch().num_coefficients();
  std::vector<double> theta(T);
  std::vector<double> noise(q.sparsity());
  sample_variational_into(q, rng, theta, noise);
  return SparseParameter(std::move(theta), q.mask());
}

double log_binomial(std::size_t n, std::size_t k) {
  if (k > n) throw std::invalid_argument("log_binomial: k > n");
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

double slab_kl(const UniformSlab& slab, double bound) {
  const double w = slab.upper - slab.lower;
  if (!(w > 0.0)) throw InfiniteKlError("KL is infinite for a degenerate uniform interval");
  if (slab.lower < -bound || slab.upper > bound)
    throw InfiniteKlError("KL is infinite for an interval leaving [-B, B]");
  return std::log(2.0 * bound / w);
}

double slab_kl(const GaussianSlab& slab) {
  return 0.5 * (slab.variance + slab.mean * slab.mean - 1.0 - std::log(slab.variance));
}

namespace {

void check_compatible(const VariationalPosterior& q, const SpikeSlabPrior& prior) {
  if (!(q.arch() == prior.arch)) throw std::invalid_argument("posterior and prior architectures differ");
  if (q.sparsity() != prior.sparsity) throw std::invalid_argument("posterior and prior sparsity differ");
  if (q.family() != prior.family) throw std::invalid_argument("posterior and prior slab families differ");
}

}  // namespace

double kl_to_prior(const VariationalPosterior& q, const SpikeSlabPrior& prior) {
  check_compatible(q, prior);
  double kl = log_binomial(prior.arch.num_coefficients(), prior.sparsity);
  if (q.family() == SlabFamily::Uniform) {
    for (const auto& s : q.uniform_slabs()) kl += slab_kl(s, prior.arch.bound());
  } else {
    for (const auto& s : q.gaussian_slabs()) kl += slab_kl(s);
  }
  return kl;
}

double kl_numeric_oracle(const VariationalPosterior& q, const SpikeSlabPrior& prior, int resolution) {
  check_compatible(q, prior);
  const std::size_t T = prior.arch.num_coefficients();
  if (T > 12) throw RefusalError("kl_numeric_oracle: T = " + std::to_string(T) + " exceeds 12");
  if (resolution < 1000) throw std::invalid_argument("kl_numeric_oracle: resolution must be >= 1000");

  // Prior mass of masks whose support coincides with q's active set. Every other
  // mask puts an exact zero on an active coordinate, so its density vanishes on
  // the support of q.
  const auto q_mask = q.mask();
  std::size_t total = 0, matching = 0;
  std::vector<std::uint8_t> m(T, 0);
  std::fill(m.end() - static_cast<std::ptrdiff_t>(prior.sparsity), m.end(), 1);
  do {
    ++total;
    if (m == q_mask) ++matching;
  } while (std::next_permutation(m.begin(), m.end()));
  if (matching == 0) throw InfiniteKlError("posterior mask has zero prior mass");
  double kl = -std::log(static_cast<double>(matching) / static_cast<double>(total));

  constexpr int kOrder = 8;
  const int panels = (resolution + kOrder - 1) / kOrder;
  const double b = prior.arch.bound();
  if (q.family() == SlabFamily::Uniform) {
    const double log_prior = -std::log(2.0 * b);
    for (const auto& s : q.uniform_slabs()) {
      if (!(s.upper > s.lower)) throw InfiniteKlError("KL is infinite for a degenerate uniform interval");
      if (s.lower < -b || s.upper > b) throw InfiniteKlError("KL is infinite outside [-B, B]");
      const double log_q = -std::log(s.upper - s.lower);
      const auto rule = composite_gauss_legendre(s.lower, s.upper, panels, kOrder);
      double acc = 0.0;
      for (std::size_t i = 0; i < rule.size(); ++i) acc += rule.weights[i] * std::exp(log_q) * (log_q - log_prior);
      kl += acc;
    }
  } else {
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    for (const auto& s : q.gaussian_slabs()) {
      const double sd = std::sqrt(s.variance);
      const auto rule = composite_gauss_legendre(s.mean - 14.0 * sd, s.mean + 14.0 * sd, panels, kOrder);
      double acc = 0.0;
      for (std::size_t i = 0; i < rule.size(); ++i) {
        const double x = rule.nodes[i];
        const double z = (x - s.mean) / sd;
        const double log_q = -half_log_2pi - std::log(sd) - 0.5 * z * z;
        const double log_p = -half_log_2pi - 0.5 * x * x;
        acc += rule.weights[i] * std::exp(log_q) * (log_q - log_p);
      }
      kl += acc;
    }
  }
  return kl;
}

SnRadius sn_radius(const Architecture& arch, std::size_t sparsity, std::size_t sample_size,
                   SlabFamily variant) {
  if (sample_size < 1 || sparsity < 1) throw std::invalid_argument("sn_radius: n and S must be >= 1");
  const double S = static_cast<double>(sparsity), n = static_cast<double>(sample_size);
  const double B = arch.bound(), D = arch.width(), L = arch.depth(), d = arch.input_dim();
  const double bd = B * D;
  const double lead = d + 1.0 + 1.0 / (bd - 1.0);
  double value;
  if (variant == SlabFamily::Uniform) {
    const double bracket = lead * lead * L * L / (bd * bd) + 1.0 / (bd * bd - 1.0) +
                           2.0 / ((bd - 1.0) * (bd - 1.0));
    value = S / (4.0 * n) * std::pow(bd, -2.0 * L) / bracket;
  } else {
    const double bd2 = 2.0 * bd;
    const double bracket = lead * lead + 1.0 / (bd2 * bd2 - 1.0) + 2.0 / ((bd2 - 1.0) * (bd2 - 1.0));
    value = S / (16.0 * n) / std::log(3.0 * D) * std::pow(bd2, -2.0 * L) / bracket;
  }
  return {value, variant, sparsity, sample_size, B, arch.width(), arch.depth(), arch.input_dim()};
}

VariationalPosterior reference_variational(const SparseParameter& theta_star, const SnRadius& radius,
                                           const SpikeSlabPrior& prior) {
  check_parameter(prior.arch, theta_star);
  std::vector<std::size_t> active;
  for (std::size_t t = 0; t < theta_star.size(); ++t)
    if (theta_star.theta()[t] != 0.0) active.push_back(t);
  if (active.size() != prior.sparsity)
    throw std::invalid_argument("reference_variational: theta_star has " + std::to_string(active.size()) +
                                " nonzeros, prior sparsity is " + std::to_string(prior.sparsity));
  if (radius.variant != prior.family)
    throw std::invalid_argument("reference_variational: radius variant differs from prior family");
  if (prior.family == SlabFamily::Gaussian) {
    std::vector<GaussianSlab> slabs;
    for (auto t : active) slabs.push_back({theta_star.theta()[t], radius.value});
    return VariationalPosterior(prior.arch, std::move(active), std::move(slabs));
  }
  const double b = prior.arch.bound();
  if (!theta_star.bounded_by(b))
    throw std::invalid_argument("reference_variational: theta_star exceeds the bound B");
  const double s = std::sqrt(radius.value);
  std::vector<UniformSlab> slabs;
  for (auto t : active) {
    const double c = theta_star.theta()[t];
    UniformSlab slab{c - s, c + s};
    if (2.0 * s >= 2.0 * b) {
      slab = {-b, b};
    } else if (slab.lower < -b) {
      slab = {-b, -b + 2.0 * s};
    } else if (slab.upper > b) {
      slab = {b - 2.0 * s, b};
    }
    slabs.push_back(slab);
  }
  return VariationalPosterior(prior.arch, std::move(active), std::move(slabs));
}

nlohmann::json to_json(const Architecture& arch) {
  return {{"d", arch.input_dim()},
          {"L", arch.depth()},
          {"D", arch.width()},
          {"B", arch.bound()},
          {"activation", arch.activation() == Activation::ReLU ? "relu" : "identity"}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
  const std::string act = j.value("activation", std::string("relu"));
  if (act != "relu" && act != "identity") throw std::invalid_argument("unknown activation '" + act + "'");
  return Architecture(j.at("d").get<int>(), j.at("L").get<int>(), j.at("D").get<int>(),
                      j.value("B", 2.0), act == "relu" ? Activation::ReLU : Activation::Identity);
}

nlohmann::json to_json(const SpikeSlabPrior& prior) {
  return {{"arch", to_json(prior.arch)}, {"S", prior.sparsity}, {"slab", to_string(prior.family)}};
}

SpikeSlabPrior prior_from_json(const nlohmann::json& j) {
  return SpikeSlabPrior(architecture_from_json(j.at("arch")), j.at("S").get<std::size_t>(),
                        slab_family_from_string(j.at("slab").get<std::string>()));
}

nlohmann::json to_json(const VariationalPosterior& q) {
  nlohmann::json slabs = nlohmann::json::array();
  if (q.family() == SlabFamily::Uniform) {
    for (const auto& s : q.uniform_slabs()) slabs.push_back({{"lower", s.lower}, {"upper", s.upper}});
  } else {
    for (const auto& s : q.gaussian_slabs()) slabs.push_back({{"mean", s.mean}, {"variance", s.variance}});
  }
  return {{"arch", to_json(q.arch())},
          {"S", q.sparsity()},
          {"slab", to_string(q.family())},
          {"mask", std::vector<std::size_t>(q.active().begin(), q.active().end())},
          {"slabs", slabs}};
}

VariationalPosterior posterior_from_json(const nlohmann::json& j) {
  auto arch = architecture_from_json(j.at("arch"));
  auto active = j.at("mask").get<std::vector<std::size_t>>();
  if (j.contains("S") && j.at("S").get<std::size_t>() != active.size())
    throw std::invalid_argument("posterior JSON: S does not match the mask length");
  const auto family = slab_family_from_string(j.at("slab").get<std::string>());
  if (family == SlabFamily::Uniform) {
    std::vector<UniformSlab> slabs;
    for (const auto& s : j.at("slabs")) slabs.push_back({s.at("lower").get<double>(), s.at("upper").get<double>()});
    return VariationalPosterior(std::move(arch), std::move(active), std::move(slabs));
  }
  std::vector<GaussianSlab> slabs;
  for (const auto& s : j.at("slabs")) slabs.push_back({s.at("mean").get<double>(), s.at("variance").get<double>()});
  return VariationalPosterior(std::move(arch), std::move(active), std::move(slabs));
}

}  // namespace sparsevb
