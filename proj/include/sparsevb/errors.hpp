#pragma once

#include <stdexcept>
#include <string>

namespace sparsevb {

// Dimension mismatch between an input and the architecture it is used with.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// KL(q || prior) is infinite, e.g. a degenerate uniform interval.
class InfiniteKlError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// An exhaustive computation was asked to run on a problem too large to enumerate.
class RefusalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Adaptive quadrature failed to reach the requested agreement.
class ResolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or missing configuration (CLI exit status 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sparsevb
