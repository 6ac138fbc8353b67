#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "gridfdi/errors.hpp"

namespace gridfdi {

/// Seeded random source. All randomized operations take one of these
/// explicitly; there is no global generator. Gaussian and integer draws are
/// implemented here (not via std:: distributions) so that a given seed
/// produces the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() {
    // 53 random bits -> double mantissa
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (no cached spare, call order independent).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it exactly uniform.
  std::uint64_t index(std::uint64_t n) {
    if (n == 0) throw ContractError("Rng::index: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  /// Independent stream for a sub-task, derived from the original seed and a
  /// caller-chosen tag via splitmix64. Unaffected by draws made so far.
  Rng child(std::uint64_t tag) const {
    std::uint64_t z = seed_ ^ (tag + 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return Rng(z ^ (z >> 31));
  }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace gridfdi
