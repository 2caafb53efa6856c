#include "sparsevb/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <omp.h>

#include "sparsevb/errors.hpp"

namespace sparsevb {

std::size_t coefficient_count(int input_dim, int depth, int width) {
  std::size_t total = 0;
  std::size_t prev = static_cast<std::size_t>(input_dim);
  for (int l = 1; l <= depth; ++l) {
    const std::size_t cur = l == depth ? 1 : static_cast<std::size_t>(width);
    total += cur * (prev + 1);
    prev = cur;
  }
  return total;
}

Architecture::Architecture(int input_dim, int depth, int width, double bound, Activation activation)
    : input_dim_(input_dim), depth_(depth), width_(width), bound_(bound), activation_(activation) {
  if (input_dim < 1) throw std::invalid_argument("Architecture: input dimension must be >= 1");
  if (depth < 3) throw std::invalid_argument("Architecture: depth L must be >= 3");
  if (width < input_dim) throw std::invalid_argument("Architecture: width D must be >= d");
  if (!(bound >= 2.0)) throw std::invalid_argument("Architecture: bound B must be >= 2");
  offsets_.reserve(depth + 1);
  std::size_t offset = 0;
  for (int l = 1; l <= depth; ++l) {
    offsets_.push_back(offset);
    offset += static_cast<std::size_t>(layer_width(l)) * (layer_width(l - 1) + 1);
  }
  offsets_.push_back(offset);
}

int Architecture::layer_width(int layer) const {
  if (layer < 0 || layer > depth_) throw std::out_of_range("layer index out of range");
  if (layer == 0) return input_dim_;
  if (layer == depth_) return 1;
  return width_;
}

std::size_t Architecture::weight_index(int layer, int row, int col) const {
  return layer_offset(layer) + static_cast<std::size_t>(row) * layer_width(layer - 1) + col;
}

std::size_t Architecture::bias_index(int layer, int row) const {
  return layer_offset(layer) + static_cast<std::size_t>(layer_width(layer)) * layer_width(layer - 1) +
         row;
}

CoefficientLocation index_map(const Architecture& arch, std::size_t t) {
  if (t >= arch.num_coefficients())
    throw std::out_of_range("index_map: flat index " + std::to_string(t) + " out of range");
  int layer = 1;
  while (layer < arch.depth() && arch.layer_offset(layer + 1) <= t) ++layer;
  const std::size_t local = t - arch.layer_offset(layer);
  const std::size_t in = arch.layer_width(layer - 1);
  const std::size_t out = arch.layer_width(layer);
  if (local < in * out) {
    return {layer, CoefficientKind::Weight, static_cast<int>(local / in), static_cast<int>(local % in)};
  }
  return {layer, CoefficientKind::Bias, static_cast<int>(local - in * out), -1};
}

SparseParameter::SparseParameter(std::vector<double> theta, std::vector<std::uint8_t> mask)
    : theta_(std::move(theta)), mask_(std::move(mask)) {
  if (theta_.size() != mask_.size())
    throw std::invalid_argument("SparseParameter: theta and mask lengths differ");
  for (std::size_t t = 0; t < theta_.size(); ++t) {
    if (mask_[t] > 1) throw std::invalid_argument("SparseParameter: mask must be binary");
    if (mask_[t]) {
      ++active_count_;
    } else if (theta_[t] != 0.0) {
      throw std::invalid_argument("SparseParameter: nonzero coefficient " + std::to_string(t) +
                                  " outside the mask");
    }
  }
}

SparseParameter SparseParameter::from_values(std::vector<double> theta) {
  std::vector<std::uint8_t> mask(theta.size());
  for (std::size_t t = 0; t < theta.size(); ++t) mask[t] = theta[t] != 0.0;
  return SparseParameter(std::move(theta), std::move(mask));
}

std::vector<std::size_t> SparseParameter::active_indices() const {
  std::vector<std::size_t> out;
  out.reserve(active_count_);
  for (std::size_t t = 0; t < mask_.size(); ++t)
    if (mask_[t]) out.push_back(t);
  return out;
}

bool SparseParameter::bounded_by(double bound) const {
  return std::all_of(theta_.begin(), theta_.end(), [&](double v) { return std::abs(v) <= bound; });
}

void check_parameter(const Architecture& arch, const SparseParameter& p) {
  if (p.size() != arch.num_coefficients())
    throw ShapeError("parameter length " + std::to_string(p.size()) + " != T = " +
                     std::to_string(arch.num_coefficients()));
}

PointSet::PointSet(int dim, std::vector<double> coords) : dim_(dim), coords_(std::move(coords)) {
  if (dim < 1) throw std::invalid_argument("PointSet: dimension must be >= 1");
  if (coords_.size() % static_cast<std::size_t>(dim) != 0)
    throw ShapeError("PointSet: coordinate count is not a multiple of the dimension");
}

PointSet PointSet::concat(const PointSet& other) const {
  if (other.dim_ != dim_) throw ShapeError("PointSet::concat: dimension mismatch");
  std::vector<double> c = coords_;
  c.insert(c.end(), other.coords_.begin(), other.coords_.end());
  return PointSet(dim_, std::move(c));
}

namespace {

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

double radical_inverse(std::size_t i, int base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

}  // namespace

PointSet halton_points(int dim, std::size_t count) {
  if (dim < 1 || dim > static_cast<int>(std::size(kPrimes)))
    throw std::invalid_argument("halton_points: unsupported dimension");
  std::vector<double> c(count * dim);
  for (std::size_t i = 0; i < count; ++i)
    for (int j = 0; j < dim; ++j) c[i * dim + j] = 2.0 * radical_inverse(i + 1, kPrimes[j]) - 1.0;
  return PointSet(dim, std::move(c));
}

PointSet sup_grid(int dim, std::size_t count) {
  const std::size_t corners = std::size_t{1} << dim;
  std::vector<double> c(corners * dim);
  for (std::size_t k = 0; k < corners; ++k)
    for (int j = 0; j < dim; ++j) c[k * dim + j] = (k >> j) & 1 ? 1.0 : -1.0;
  return PointSet(dim, std::move(c)).concat(halton_points(dim, count));
}

Evaluator::Evaluator(const Architecture& arch) : arch_(arch) {
  unit_offset_.resize(arch.depth() + 2);
  unit_offset_[0] = 0;
  for (int l = 0; l <= arch.depth(); ++l) unit_offset_[l + 1] = unit_offset_[l] + arch.layer_width(l);
  pre_.assign(unit_offset_.back(), 0.0);
  post_.assign(unit_offset_.back(), 0.0);
  delta_.assign(arch.max_width(), 0.0);
  delta_next_.assign(arch.max_width(), 0.0);
}

std::span<const double> Evaluator::layer_output(int layer) const {
  return std::span<const double>(post_).subspan(unit_offset_[layer], arch_.layer_width(layer));
}

double Evaluator::value(std::span<const double> theta, std::span<const double> x) {
  const int depth = arch_.depth();
  const Activation act = arch_.activation();
  std::copy(x.begin(), x.end(), post_.begin());
  for (int l = 1; l <= depth; ++l) {
    const int in = arch_.layer_width(l - 1);
    const int out = arch_.layer_width(l);
    const double* w = theta.data() + arch_.layer_offset(l);
    const double* b = w + static_cast<std::size_t>(out) * in;
    const double* src = post_.data() + unit_offset_[l - 1];
    double* z = pre_.data() + unit_offset_[l];
    double* dst = post_.data() + unit_offset_[l];
    for (int i = 0; i < out; ++i) {
      double s = b[i];
      const double* row = w + static_cast<std::size_t>(i) * in;
      for (int j = 0; j < in; ++j) s += row[j] * src[j];
      z[i] = s;
      dst[i] = l == depth ? s : activate(act, s);
    }
  }
  return post_[unit_offset_[depth]];
}

void Evaluator::backpropagate(std::span<const double> theta, double upstream, std::span<double> grad) {
  const int depth = arch_.depth();
  const Activation act = arch_.activation();
  // delta holds d f / d z_l for the current layer.
  delta_[0] = upstream;
  for (int l = depth; l >= 1; --l) {
    const int in = arch_.layer_width(l - 1);
    const int out = arch_.layer_width(l);
    const std::size_t w_off = arch_.layer_offset(l);
    const std::size_t b_off = w_off + static_cast<std::size_t>(out) * in;
    const double* src = post_.data() + unit_offset_[l - 1];
    const double* w = theta.data() + w_off;
    for (int i = 0; i < out; ++i) {
      const double di = delta_[i];
      double* g = grad.data() + w_off + static_cast<std::size_t>(i) * in;
      for (int j = 0; j < in; ++j) g[j] += di * src[j];
      grad[b_off + i] += di;
    }
    if (l == 1) break;
    const double* z_prev = pre_.data() + unit_offset_[l - 1];
    for (int j = 0; j < in; ++j) {
      double s = 0.0;
      for (int i = 0; i < out; ++i) s += w[static_cast<std::size_t>(i) * in + j] * delta_[i];
      delta_next_[j] = s * activate_derivative(act, z_prev[j]);
    }
    std::swap(delta_, delta_next_);
  }
}

namespace {

void check_point(const Architecture& arch, std::span<const double> x) {
  if (static_cast<int>(x.size()) != arch.input_dim())
    throw ShapeError("input has dimension " + std::to_string(x.size()) + ", expected " +
                     std::to_string(arch.input_dim()));
}

}  // namespace

double forward(const Architecture& arch, const SparseParameter& p, std::span<const double> x) {
  check_parameter(arch, p);
  check_point(arch, x);
  Evaluator ev(arch);
  return ev.value(p.theta(), x);
}

std::vector<double> partial_forward(const Architecture& arch, const SparseParameter& p,
                                    std::span<const double> x, int layer) {
  check_parameter(arch, p);
  check_point(arch, x);
  if (layer < 0 || layer > arch.depth()) throw std::out_of_range("partial_forward: layer out of range");
  Evaluator ev(arch);
  ev.value(p.theta(), x);
  const auto out = ev.layer_output(layer);
  return {out.begin(), out.end()};
}

std::vector<double> layer_sup_deviation(const Architecture& arch, const SparseParameter& p1,
                                        const SparseParameter& p2, const PointSet& grid) {
  check_parameter(arch, p1);
  check_parameter(arch, p2);
  if (grid.empty()) throw std::invalid_argument("layer_sup_deviation: empty grid");
  if (grid.dim() != arch.input_dim()) throw ShapeError("layer_sup_deviation: grid dimension mismatch");
  const int depth = arch.depth();
  const auto npts = static_cast<std::ptrdiff_t>(grid.size());
  std::vector<double> result(depth, 0.0);
#pragma omp parallel
  {
    Evaluator e1(arch), e2(arch);
    std::vector<double> local(depth, 0.0);
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t k = 0; k < npts; ++k) {
      const auto x = grid.point(static_cast<std::size_t>(k));
      e1.value(p1.theta(), x);
      e2.value(p2.theta(), x);
      for (int l = 1; l <= depth; ++l) {
        const auto a = e1.layer_output(l);
        const auto b = e2.layer_output(l);
        for (std::size_t i = 0; i < a.size(); ++i) local[l - 1] = std::max(local[l - 1], std::abs(a[i] - b[i]));
      }
    }
#pragma omp critical
    for (int l = 0; l < depth; ++l) result[l] = std::max(result[l], local[l]);
  }
  return result;
}

std::vector<double> layer_sup_magnitude(const Architecture& arch, const SparseParameter& p,
                                        const PointSet& grid) {
  const SparseParameter zero(std::vector<double>(arch.num_coefficients(), 0.0),
                             std::vector<std::uint8_t>(arch.num_coefficients(), 0));
  return layer_sup_deviation(arch, p, zero, grid);
}

}  // namespace sparsevb
