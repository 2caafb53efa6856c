#pragma once

#include <cstddef>
#include <vector>

namespace sparsevb {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

// n-point Gauss-Legendre rule on [-1, 1].
QuadratureRule gauss_legendre(int order);

// Composite Gauss-Legendre on [lo, hi]: `panels` equal panels of `order` nodes each.
QuadratureRule composite_gauss_legendre(double lo, double hi, int panels, int order);

}  // namespace sparsevb
