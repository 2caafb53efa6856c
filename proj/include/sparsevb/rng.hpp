#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace sparsevb {

// Counter-based generator (Philox4x32-10). A stream is identified by a 64-bit
// key derived from (seed, purpose tag); child streams derive new keys from an
// index or tag, so draws never depend on the order in which streams are used.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view purpose);

  Rng child(std::uint64_t index) const;
  Rng child(std::string_view purpose) const;

  std::uint64_t key() const { return key_; }

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  // Sorted set of `count` distinct indices drawn uniformly from [0, population).
  std::vector<std::size_t> subset(std::size_t population, std::size_t count);

 private:
  explicit Rng(std::uint64_t key);
  void refill();

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> block_{};
  int available_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

}  // namespace sparsevb
