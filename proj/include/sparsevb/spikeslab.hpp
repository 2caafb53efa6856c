#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "sparsevb/net.hpp"
#include "sparsevb/rng.hpp"

namespace sparsevb {

enum class SlabFamily { Uniform, Gaussian };

const char* to_string(SlabFamily family);
SlabFamily slab_family_from_string(const std::string& name);

// Mask uniform over binary T-vectors with exactly S ones; active coordinates
// i.i.d. U([-B, B]) (Uniform) or N(0, 1) (Gaussian).
struct SpikeSlabPrior {
  SpikeSlabPrior(Architecture arch, std::size_t sparsity, SlabFamily family);

  Architecture arch;
  std::size_t sparsity;
  SlabFamily family;
};

struct UniformSlab {
  double lower;
  double upper;
};

struct GaussianSlab {
  double mean;
  double variance;
};

// Spike-and-slab variational distribution with a deterministic mask. Slabs are
// stored in increasing order of their flat coefficient index.
class VariationalPosterior {
 public:
  VariationalPosterior(Architecture arch, std::vector<std::size_t> active,
                       std::vector<UniformSlab> slabs);
  VariationalPosterior(Architecture arch, std::vector<std::size_t> active,
                       std::vector<GaussianSlab> slabs);

  const Architecture& arch() const { return arch_; }
  SlabFamily family() const { return family_; }
  std::size_t sparsity() const { return active_.size(); }
  std::span<const std::size_t> active() const { return active_; }
  std::span<const UniformSlab> uniform_slabs() const { return uniform_; }
  std::span<const GaussianSlab> gaussian_slabs() const { return gaussian_; }
  std::vector<std::uint8_t> mask() const;

  // Center of each slab scattered into a length-T vector.
  std::vector<double> slab_centers() const;

 private:
  Architecture arch_;
  SlabFamily family_;
  std::vector<std::size_t> active_;
  std::vector<UniformSlab> uniform_;
  std::vector<GaussianSlab> gaussian_;
};

SparseParameter sample_prior(const SpikeSlabPrior& prior, Rng& rng);
SparseParameter sample_variational(const VariationalPosterior& q, Rng& rng);

// Draws theta ~ q into `theta` (length T, zeroed outside the mask) and the
// standardized noise behind each active coordinate into `noise` (length S):
// U[0,1] variates for uniform slabs, N(0,1) for Gaussian slabs.
void sample_variational_into(const VariationalPosterior& q, Rng& rng, std::span<double> theta,
                             std::span<double> noise);

// log C(n, k) via log-gamma.
double log_binomial(std::size_t n, std::size_t k);

double slab_kl(const UniformSlab& slab, double bound);
double slab_kl(const GaussianSlab& slab);

// Closed form: log C(T,S) + sum over active coordinates of the slab KL.
double kl_to_prior(const VariationalPosterior& q, const SpikeSlabPrior& prior);

// Independent evaluation of KL(q || prior): enumerates every prior mask and
// integrates the log density ratio over each active coordinate by composite
// Gauss-Legendre quadrature. Refuses T > 12.
double kl_numeric_oracle(const VariationalPosterior& q, const SpikeSlabPrior& prior,
                         int resolution = 1024);

struct SnRadius {
  double value;  // s_n^2
  SlabFamily variant;
  std::size_t sparsity;
  std::size_t sample_size;
  double bound;
  int width;
  int depth;
  int input_dim;
};

SnRadius sn_radius(const Architecture& arch, std::size_t sparsity, std::size_t sample_size,
                   SlabFamily variant);

// The distribution q_n^* centred at theta_star. Uniform intervals leaving
// [-B, B] are translated back inside with their width kept.
VariationalPosterior reference_variational(const SparseParameter& theta_star, const SnRadius& radius,
                                           const SpikeSlabPrior& prior);

nlohmann::json to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SpikeSlabPrior& prior);
SpikeSlabPrior prior_from_json(const nlohmann::json& j);
nlohmann::json to_json(const VariationalPosterior& q);
VariationalPosterior posterior_from_json(const nlohmann::json& j);

}  // namespace sparsevb
