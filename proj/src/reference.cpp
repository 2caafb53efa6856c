// Single-threaded kernels with left-to-right summation. They share no code
// path with the OpenMP versions beyond the network evaluator and the samplers,
// and exist to test and benchmark them.

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sparsevb/elbo.hpp"
#include "sparsevb/errors.hpp"

namespace sparsevb::reference {

FitEstimate fit_term(const Dataset& data, const VariationalPosterior& q, double alpha,
                     std::size_t n_samples, const Rng& rng) {
  if (data.empty()) throw std::invalid_argument("fit_term: empty dataset");
  if (!(alpha > 0.0 && alpha < 1.0) || n_samples < 2) throw std::invalid_argument("fit_term: bad arguments");
  const double scale = alpha / (2.0 * data.noise_variance());
  Evaluator ev(q.arch());
  std::vector<double> theta(q.arch().num_coefficients()), noise(q.sparsity()), totals;
  for (std::size_t k = 0; k < n_samples; ++k) {
    Rng r = rng.child(k);
    sample_variational_into(q, r, theta, noise);
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double res = data.ys()[i] - ev.value(theta, data.point(i));
      s += res * res;
    }
    totals.push_back(scale * s);
  }
  double mean = 0.0;
  for (double t : totals) mean += t;
  mean /= static_cast<double>(n_samples);
  double ss = 0.0;
  for (double t : totals) ss += (t - mean) * (t - mean);
  const double n = static_cast<double>(n_samples);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

ElboGradient elbo_gradient(const Dataset& data, const VariationalPosterior& q, const SpikeSlabPrior& prior,
                           double alpha, std::size_t n_samples, const Rng& rng) {
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
  const auto active = q.active();
  const std::size_t S = q.sparsity();
  Evaluator ev(q.arch());
  std::vector<double> theta(q.arch().num_coefficients()), noise(S), grad(theta.size());
  std::vector<double> fit_grad(2 * S, 0.0), totals;
  for (std::size_t k = 0; k < n_samples; ++k) {
    Rng r = rng.child(k);
    sample_variational_into(q, r, theta, noise);
    std::fill(grad.begin(), grad.end(), 0.0);
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double res = data.ys()[i] - ev.value(theta, data.point(i));
      s += res * res;
      ev.backpropagate(theta, -2.0 * scale * res, grad);
    }
    totals.push_back(scale * s);
    for (std::size_t a = 0; a < S; ++a) {
      const double g = grad[active[a]];
      double spread;
      if (q.family() == SlabFamily::Uniform) {
        const auto& sl = q.uniform_slabs()[a];
        spread = 0.5 * (sl.upper - sl.lower) * (2.0 * noise[a] - 1.0);
      } else {
        spread = std::sqrt(q.gaussian_slabs()[a].variance) * noise[a];
      }
      fit_grad[2 * a] += g;
      fit_grad[2 * a + 1] += g * spread;
    }
  }
  const double n = static_cast<double>(n_samples);
  for (std::size_t c = 0; c < 2 * S; ++c) out.gradient[c] -= fit_grad[c] / n;
  double mean = 0.0;
  for (double t : totals) mean += t;
  mean /= n;
  double ss = 0.0;
  for (double t : totals) ss += (t - mean) * (t - mean);
  out.estimate.fit_term = mean;
  out.estimate.std_error = std::sqrt(ss / (n - 1.0) / n);
  out.estimate.value = -mean - out.estimate.kl_term;
  return out;
}

std::vector<double> layer_sup_deviation(const Architecture& arch, const SparseParameter& p1,
                                        const SparseParameter& p2, const PointSet& grid) {
  check_parameter(arch, p1);
  check_parameter(arch, p2);
  if (grid.empty()) throw std::invalid_argument("layer_sup_deviation: empty grid");
  if (grid.dim() != arch.input_dim()) throw ShapeError("layer_sup_deviation: grid dimension mismatch");
  std::vector<double> result(arch.depth(), 0.0);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (int l = 1; l <= arch.depth(); ++l) {
      const auto a = partial_forward(arch, p1, grid.point(k), l);
      const auto b = partial_forward(arch, p2, grid.point(k), l);
      for (std::size_t i = 0; i < a.size(); ++i) result[l - 1] = std::max(result[l - 1], std::abs(a[i] - b[i]));
    }
  }
  return result;
}

}  // namespace sparsevb::reference
