#include "gridfdi/attack.hpp"

#include <algorithm>

#include "gridfdi/scenario.hpp"

namespace gridfdi {

std::vector<std::size_t> random_support(std::size_t k, std::size_t m,
                                        Rng& rng) {
  if (k > m)
    throw ContractError("attack: k = " + std::to_string(k) +
                        " exceeds meter count m = " + std::to_string(m));
  // Partial Fisher-Yates over the index pool.
  std::vector<std::size_t> pool(m);
  for (std::size_t i = 0; i < m; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.index(m - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

AttackVector gaussian_on_support(const std::vector<std::size_t>& support,
                                 double sigma, std::size_t m, Rng& rng) {
  if (!(sigma > 0.0)) throw ContractError("attack: sigma must be positive");
  AttackVector a = AttackVector::Zero(m);
  for (std::size_t idx : support) {
    if (idx >= m) throw ContractError("attack: support index out of range");
    a(static_cast<Eigen::Index>(idx)) = sigma * rng.normal();
  }
  return a;
}

AttackVector random_attack(std::size_t k, double sigma, std::size_t m,
                           Rng& rng) {
  if (k == 0) return AttackVector::Zero(m);
  return gaussian_on_support(random_support(k, m, rng), sigma, m, rng);
}

AttackVector stealthy_attack(const MeasurementMatrix& h,
                             const Eigen::VectorXd& c) {
  if (c.size() != h.n_free())
    throw ContractError("attack: c length " + std::to_string(c.size()) +
                        " does not match n_free " + std::to_string(h.n_free()));
  return h.h * c;
}

std::vector<AttackVector> replay_attack(const Trace& victim,
                                        const Trace& recorded,
                                        std::size_t offset,
                                        const SampleWindow& window) {
  if (window.begin > window.end)
    throw ContractError("replay: window begin exceeds end");
  if (window.end > victim.size())
    throw ContractError("replay: window exceeds victim trace length");
  if (offset + window.length() > recorded.size())
    throw ContractError("replay: window of " +
                        std::to_string(window.length()) +
                        " samples at offset " + std::to_string(offset) +
                        " exceeds recorded trace length " +
                        std::to_string(recorded.size()));
  std::vector<AttackVector> attack(victim.size());
  for (std::size_t t = 0; t < victim.size(); ++t) {
    if (window.contains(t)) {
      const auto& substitute = recorded.z[offset + (t - window.begin)];
      if (substitute.size() != victim.z[t].size())
        throw ContractError("replay: recorded measurement dimension differs");
      attack[t] = substitute - victim.z[t];
    } else {
      attack[t] = AttackVector::Zero(victim.z[t].size());
    }
  }
  return attack;
}

double attacking_capability(std::size_t k, std::size_t n_meters) {
  if (n_meters == 0) throw ContractError("capability: n_meters must be > 0");
  if (k > n_meters)
    throw ContractError("capability: k exceeds meter count");
  return static_cast<double>(k) / static_cast<double>(n_meters);
}

}  // namespace gridfdi
