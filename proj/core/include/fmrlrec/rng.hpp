#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace fmrlrec {

/// Counter-based generator: every draw is a pure function of
/// (seed, site, step, index), so results do not depend on call order.
class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::uint64_t site, std::uint64_t step = 0)
      : key_(mix(mix(mix(seed) ^ (site * 0x9E3779B97F4A7C15ULL)) ^ (step * 0xD1B54A32D192ED03ULL))) {}

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  constexpr std::uint64_t bits(std::uint64_t index) const { return mix(key_ ^ mix(index)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t index) const {
    return static_cast<double>(bits(index) >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t index, std::uint64_t n) const {
    return static_cast<std::uint64_t>(uniform(index) * static_cast<double>(n)) % n;
  }

  /// Standard normal via Box-Muller on two decorrelated counters.
  double normal(std::uint64_t index) const {
    double u1 = uniform(2 * index);
    const double u2 = uniform(2 * index + 1);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

}  // namespace fmrlrec
