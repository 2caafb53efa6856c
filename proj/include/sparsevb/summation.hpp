#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace sparsevb {

// Pairwise (cascade) summation. The association order depends only on the
// length, so reductions over per-worker buffers are thread-count independent.
inline double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

struct MeanAndError {
  double mean = 0.0;
  double std_error = 0.0;
};

// Sample mean and standard error (sample standard deviation / sqrt(n)).
inline MeanAndError mean_and_error(std::span<const double> values) {
  MeanAndError out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = pairwise_sum(values) / n;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return out;
}

}  // namespace sparsevb
