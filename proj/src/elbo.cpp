#include "sparsevb/elbo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <omp.h>

#include "sparsevb/errors.hpp"
#include "sparsevb/summation.hpp"

namespace sparsevb {

Dataset::Dataset(int dim, std::vector<double> xs, std::vector<double> ys, double noise_variance)
    : dim_(dim), xs_(std::move(xs)), ys_(std::move(ys)), noise_variance_(noise_variance) {
  if (dim < 1) throw std::invalid_argument("Dataset: dimension must be >= 1");
  if (xs_.size() != ys_.size() * static_cast<std::size_t>(dim))
    throw ShapeError("Dataset: xs and ys lengths do not match");
  if (!(noise_variance >= 0.0)) throw std::invalid_argument("Dataset: noise variance must be >= 0");
  for (double v : xs_)
    if (!(v >= -1.0 && v <= 1.0)) throw std::invalid_argument("Dataset: inputs must lie in [-1,1]^d");
}

Dataset Dataset::permuted(std::span<const std::size_t> order) const {
  if (order.size() != size()) throw ShapeError("Dataset::permuted: order has the wrong length");
  std::vector<double> xs(xs_.size()), ys(ys_.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    ys[i] = ys_.at(order[i]);
    std::copy_n(xs_.begin() + order[i] * dim_, dim_, xs.begin() + i * dim_);
  }
  return Dataset(dim_, std::move(xs), std::move(ys), noise_variance_);
}

namespace {

void check_inputs(const Dataset& data, const VariationalPosterior& q, double alpha, std::size_t n_samples) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (n_samples < 2) throw std::invalid_argument("n_samples must be >= 2");
  if (data.dim() != q.arch().input_dim()) throw ShapeError("dataset dimension differs from the architecture");
  if (!data.empty() && !(data.noise_variance() > 0.0))
    throw std::invalid_argument("noise variance must be positive");
}

}  // namespace

std::vector<double> fit_term_draws(const Dataset& data, const VariationalPosterior& q, double alpha,
                                   std::size_t n_samples, const Rng& rng) {
  check_inputs(data, q, alpha, n_samples);
  if (data.empty()) throw std::invalid_argument("fit_term: empty dataset");
  const double scale = alpha / (2.0 * data.noise_variance());
  const std::size_t T = q.arch().num_coefficients();
  const auto n = data.size();
  std::vector<double> totals(n_samples);
  const auto draws = static_cast<std::ptrdiff_t>(n_samples);
#pragma omp parallel
  {
    Evaluator ev(q.arch());
    std::vector<double> theta(T), noise(q.sparsity()), sq(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < draws; ++k) {
      Rng r = rng.child(static_cast<std::uint64_t>(k));
      sample_variational_into(q, r, theta, noise);
      for (std::size_t i = 0; i < n; ++i) {
        const double res = data.ys()[i] - ev.value(theta, data.point(i));
        sq[i] = res * res;
      }
      totals[k] = scale * pairwise_sum(sq);
    }
  }
  return totals;
}

FitEstimate fit_term(const Dataset& data, const VariationalPosterior& q, double alpha,
                     std::size_t n_samples, const Rng& rng) {
  const auto totals = fit_term_draws(data, q, alpha, n_samples, rng);
  const auto me = mean_and_error(totals);
  return {me.mean, me.std_error};
}

ElboEstimate elbo(const Dataset& data, const VariationalPosterior& q, const SpikeSlabPrior& prior,
                  double alpha, std::size_t n_samples, const Rng& rng) {
  check_inputs(data, q, alpha, n_samples);
  ElboEstimate out;
  out.alpha = alpha;
  out.n_samples = n_samples;
  out.kl_term = kl_to_prior(q, prior);
  if (!data.empty()) {
    const auto fit = fit_term(data, q, alpha, n_samples, rng);
    out.fit_term = fit.value;
    out.std_error = fit.std_error;
  }
  out.value = -out.fit_term - out.kl_term;
  return out;
}

std::vector<double> slab_parameters(const VariationalPosterior& q) {
  std::vector<double> p;
  p.reserve(2 * q.sparsity());
  if (q.family() == SlabFamily::Uniform) {
    for (const auto& s : q.uniform_slabs()) {
      const double half = 0.5 * (s.upper - s.lower);
      if (!(half > 0.0))
        throw std::invalid_argument("degenerate uniform interval has no log half-width parameter");
      p.push_back(0.5 * (s.lower + s.upper));
      p.push_back(std::log(half));
    }
  } else {
    for (const auto& s : q.gaussian_slabs()) {
      p.push_back(s.mean);
      p.push_back(0.5 * std::log(s.variance));
    }
  }
  return p;
}

void project_slab_parameters(SlabFamily family, double bound, std::span<double> params) {
  if (family != SlabFamily::Uniform) return;
  constexpr double kMinLogHalfWidth = -30.0;
  for (std::size_t k = 0; 2 * k + 1 < params.size(); ++k) {
    double& c = params[2 * k];
    double& h = params[2 * k + 1];
    h = std::clamp(h, kMinLogHalfWidth, std::log(bound));
    const double w = std::exp(h);
    c = std::clamp(c, -bound + w, bound - w);
  }
}

VariationalPosterior with_slab_parameters(const VariationalPosterior& q, std::span<const double> params) {
  if (params.size() != 2 * q.sparsity()) throw ShapeError("slab parameter vector has the wrong length");
  std::vector<std::size_t> active(q.active().begin(), q.active().end());
  if (q.family() == SlabFamily::Uniform) {
    std::vector<double> p(params.begin(), params.end());
    project_slab_parameters(SlabFamily::Uniform, q.arch().bound(), p);
    std::vector<UniformSlab> slabs;
    const double b = q.arch().bound();
    for (std::size_t k = 0; k < q.sparsity(); ++k) {
      const double w = std::exp(p[2 * k + 1]);
      slabs.push_back({std::max(-b, p[2 * k] - w), std::min(b, p[2 * k] + w)});
    }
    return VariationalPosterior(q.arch(), std::move(active), std::move(slabs));
  }
  std::vector<GaussianSlab> slabs;
  for (std::size_t k = 0; k < q.sparsity(); ++k)
    slabs.push_back({params[2 * k], std::exp(2.0 * params[2 * k + 1])});
  return VariationalPosterior(q.arch(), std::move(active), std::move(slabs));
}

std::vector<double> kl_gradient(const VariationalPosterior& q) {
  std::vector<double> g(2 * q.sparsity(), 0.0);
  if (q.family() == SlabFamily::Uniform) {
    // KL_t = log B - log half-width.
    for (std::size_t k = 0; k < q.sparsity(); ++k) g[2 * k + 1] = -1.0;
  } else {
    const auto slabs = q.gaussian_slabs();
    for (std::size_t k = 0; k < q.sparsity(); ++k) {
      g[2 * k] = slabs[k].mean;
      g[2 * k + 1] = slabs[k].variance - 1.0;
    }
  }
  return g;
}

namespace {

// d theta_t / d (second slab parameter) for one draw.
inline double spread_partial(const VariationalPosterior& q, std::size_t k, double noise) {
  if (q.family() == SlabFamily::Uniform) {
    const auto& s = q.uniform_slabs()[k];
    return 0.5 * (s.upper - s.lower) * (2.0 * noise - 1.0);
  }
  return std::sqrt(q.gaussian_slabs()[k].variance) * noise;
}

}  // namespace

ElboGradient elbo_gradient(const Dataset& data, const VariationalPosterior& q, const SpikeSlabPrior& prior,
                           double alpha, std::size_t n_samples, const Rng& rng) {
  check_inputs(data, q, alpha, n_samples);
  (void)slab_parameters(q);  // rejects degenerate intervals
  ElboGradient out;
  out.gradient = kl_gradient(q);
  for (double& g : out.gradient) g = -g;
  out.estimate.alpha = alpha;
  out.estimate.n_samples = n_samples;
  out.estimate.kl_term = kl_to_prior(q, prior);
  if (data.empty()) {
    out.estimate.value = -out.estimate.kl_term;
    return out;
  }

  const double scale = alpha / (2.0 * data.noise_variance());
  const std::size_t T = q.arch().num_coefficients();
  const std::size_t S = q.sparsity();
  const std::size_t P = 2 * S;
  const auto n = data.size();
  const auto active = q.active();
  std::vector<double> totals(n_samples);
  // Component-major so every parameter reduces over a contiguous span.
  std::vector<double> per_draw(P * n_samples);
  const auto draws = static_cast<std::ptrdiff_t>(n_samples);
#pragma omp parallel
  {
    Evaluator ev(q.arch());
    std::vector<double> theta(T), noise(S), grad_theta(T), sq(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < draws; ++k) {
      Rng r = rng.child(static_cast<std::uint64_t>(k));
      sample_variational_into(q, r, theta, noise);
      std::fill(grad_theta.begin(), grad_theta.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double res = data.ys()[i] - ev.value(theta, data.point(i));
        sq[i] = res * res;
        ev.backpropagate(theta, -2.0 * scale * res, grad_theta);
      }
      totals[k] = scale * pairwise_sum(sq);
      for (std::size_t a = 0; a < S; ++a) {
        const double g = grad_theta[active[a]];
        per_draw[(2 * a) * n_samples + k] = g;
        per_draw[(2 * a + 1) * n_samples + k] = g * spread_partial(q, a, noise[a]);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(n_samples);
  for (std::size_t c = 0; c < P; ++c)
    out.gradient[c] -= inv * pairwise_sum(std::span<const double>(per_draw).subspan(c * n_samples, n_samples));
  const auto me = mean_and_error(totals);
  out.estimate.fit_term = me.mean;
  out.estimate.std_error = me.std_error;
  out.estimate.value = -me.mean - out.estimate.kl_term;
  return out;
}

}  // namespace sparsevb
