#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sparsevb {

enum class Activation { ReLU, Identity };

inline double activate(Activation act, double u) {
  return act == Activation::ReLU ? (u > 0.0 ? u : 0.0) : u;
}

// Subgradient convention: ReLU'(0) = 0.
inline double activate_derivative(Activation act, double u) {
  return act == Activation::ReLU ? (u > 0.0 ? 1.0 : 0.0) : 1.0;
}

// Number of coefficients of a fully connected network with input dimension d,
// L layers and hidden width D (valid for any L >= 1).
std::size_t coefficient_count(int input_dim, int depth, int width);

// Feed-forward architecture: D_0 = d, D_l = D for 1 <= l <= L-1, D_L = 1.
class Architecture {
 public:
  Architecture(int input_dim, int depth, int width, double bound,
               Activation activation = Activation::ReLU);

  int input_dim() const { return input_dim_; }
  int depth() const { return depth_; }
  int width() const { return width_; }
  double bound() const { return bound_; }
  Activation activation() const { return activation_; }

  // Width of layer l, 0 <= l <= L.
  int layer_width(int layer) const;
  int max_width() const { return width_ > input_dim_ ? width_ : input_dim_; }
  std::size_t num_coefficients() const { return offsets_.back(); }

  // First flat index of layer l (1 <= l <= L). Layer-major; inside a layer the
  // weight matrix in row-major order, then the bias vector.
  std::size_t layer_offset(int layer) const { return offsets_[layer - 1]; }
  std::size_t weight_index(int layer, int row, int col) const;
  std::size_t bias_index(int layer, int row) const;

  bool operator==(const Architecture&) const = default;

 private:
  int input_dim_;
  int depth_;
  int width_;
  double bound_;
  Activation activation_;
  std::vector<std::size_t> offsets_;
};

enum class CoefficientKind { Weight, Bias };

struct CoefficientLocation {
  int layer = 0;
  CoefficientKind kind = CoefficientKind::Weight;
  int row = 0;
  int col = -1;  // -1 for biases
  bool operator==(const CoefficientLocation&) const = default;
};

CoefficientLocation index_map(const Architecture& arch, std::size_t t);

// Flat coefficient vector with an exact-sparsity mask.
class SparseParameter {
 public:
  SparseParameter() = default;
  // Throws std::invalid_argument if theta_t != 0 where mask_t == 0.
  SparseParameter(std::vector<double> theta, std::vector<std::uint8_t> mask);
  // Mask is the support of theta.
  static SparseParameter from_values(std::vector<double> theta);

  std::span<const double> theta() const { return theta_; }
  std::span<const std::uint8_t> mask() const { return mask_; }
  std::size_t size() const { return theta_.size(); }
  std::size_t active_count() const { return active_count_; }
  std::vector<std::size_t> active_indices() const;
  bool bounded_by(double bound) const;

 private:
  std::vector<double> theta_;
  std::vector<std::uint8_t> mask_;
  std::size_t active_count_ = 0;
};

// Row-major point cloud in [-1,1]^d.
class PointSet {
 public:
  PointSet(int dim, std::vector<double> coords);
  int dim() const { return dim_; }
  std::size_t size() const { return coords_.size() / static_cast<std::size_t>(dim_); }
  bool empty() const { return coords_.empty(); }
  std::span<const double> point(std::size_t i) const {
    return std::span<const double>(coords_).subspan(i * dim_, dim_);
  }
  std::span<const double> coords() const { return coords_; }
  PointSet concat(const PointSet& other) const;

 private:
  int dim_;
  std::vector<double> coords_;
};

// First `count` Halton points (bases 2, 3, 5, ...) mapped to [-1,1]^d.
PointSet halton_points(int dim, std::size_t count);
// Halton points plus the 2^d cube corners; the default sup-norm grid.
PointSet sup_grid(int dim, std::size_t count = 4096);

// Reusable evaluation buffers for one architecture. Not thread-safe; use one
// per worker.
class Evaluator {
 public:
  explicit Evaluator(const Architecture& arch);

  const Architecture& arch() const { return arch_; }

  // f_theta(x); leaves every partial network output readable via layer_output.
  double value(std::span<const double> theta, std::span<const double> x);

  // grad += upstream * d f_theta(x) / d theta at the point of the most recent
  // value() call (reverse mode).
  void backpropagate(std::span<const double> theta, double upstream, std::span<double> grad);

  double value_and_gradient(std::span<const double> theta, std::span<const double> x,
                            double upstream, std::span<double> grad) {
    const double f = value(theta, x);
    backpropagate(theta, upstream, grad);
    return f;
  }

  // f^l_theta(x) from the most recent evaluation, 0 <= l <= L.
  std::span<const double> layer_output(int layer) const;

 private:
  Architecture arch_;
  std::vector<std::size_t> unit_offset_;
  std::vector<double> pre_;   // pre-activations, layers 1..L
  std::vector<double> post_;  // outputs, layers 0..L
  std::vector<double> delta_;
  std::vector<double> delta_next_;
};

double forward(const Architecture& arch, const SparseParameter& p, std::span<const double> x);

std::vector<double> partial_forward(const Architecture& arch, const SparseParameter& p,
                                    std::span<const double> x, int layer);

// Empirical r_l, l = 1..L: max over grid points and units of
// |f^l_{p1}(x)_i - f^l_{p2}(x)_i|. A lower bound on the sup over the cube.
std::vector<double> layer_sup_deviation(const Architecture& arch, const SparseParameter& p1,
                                        const SparseParameter& p2, const PointSet& grid);

// Empirical c_l, l = 1..L: max over grid points and units of |f^l_p(x)_i|.
std::vector<double> layer_sup_magnitude(const Architecture& arch, const SparseParameter& p,
                                        const PointSet& grid);

void check_parameter(const Architecture& arch, const SparseParameter& p);

}  // namespace sparsevb
