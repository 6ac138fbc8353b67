#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gridfdi/grid_model.hpp"

namespace gridfdi {

struct Trace;  // scenario.hpp

/// The injection a added to (or substituted into) the meter readings.
using AttackVector = Eigen::VectorXd;

/// Half-open sample window [begin, end) an attack occupies.
struct SampleWindow {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - begin; }
  bool contains(std::size_t t) const noexcept { return t >= begin && t < end; }
};

/// k meters picked uniformly at random, each carrying i.i.d. N(0, sigma^2).
/// The support is drawn once per attack; values are redrawn every sample.
struct RandomGaussianAttack {
  std::size_t k = 0;
  double sigma = 0.5;
};

/// a = H c: invisible to any residual-based detector.
struct StealthyAttack {
  Eigen::VectorXd c;  // state perturbation, length n_free
};

/// Substitute a previously recorded stream for the victim's measurements.
struct ReplayEventAttack {
  std::string trace_id;
  std::size_t offset = 0;  // alignment into the recorded trace
};

struct AttackSpec {
  std::variant<RandomGaussianAttack, StealthyAttack, ReplayEventAttack> kind;
  SampleWindow window;
};

/// Exactly k of m positions (uniform, without replacement) carry
/// i.i.d. N(0, sigma^2) values; the rest are zero.
AttackVector random_attack(std::size_t k, double sigma, std::size_t m,
                           Rng& rng);

/// The support half of random_attack: k distinct indices in [0, m).
std::vector<std::size_t> random_support(std::size_t k, std::size_t m,
                                        Rng& rng);

/// N(0, sigma^2) values on a fixed support, zero elsewhere.
AttackVector gaussian_on_support(const std::vector<std::size_t>& support,
                                 double sigma, std::size_t m, Rng& rng);

/// a = H c. Leaves the WLS residual, and hence the static detector, unchanged.
AttackVector stealthy_attack(const MeasurementMatrix& h,
                             const Eigen::VectorXd& c);

/// Per-step attack vectors that replace the victim stream inside the window
/// with the recorded one: a(t) = recorded.z(offset + t - begin) - victim.z(t).
std::vector<AttackVector> replay_attack(const Trace& victim,
                                        const Trace& recorded,
                                        std::size_t offset,
                                        const SampleWindow& window);

/// k / n_meters, the fraction of meters the adversary controls.
double attacking_capability(std::size_t k, std::size_t n_meters);

}  // namespace gridfdi
