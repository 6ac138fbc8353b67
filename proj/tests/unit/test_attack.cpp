#include <cmath>
#include <set>

#include "doctest.h"
#include "gridfdi/attack.hpp"
#include "gridfdi/estimation.hpp"
#include "gridfdi/scenario.hpp"

using namespace gridfdi;

namespace {

MeasurementMatrix matrix_of(Eigen::MatrixXd h) {
  MeasurementMatrix m;
  m.h = std::move(h);
  return m;
}

}  // namespace

TEST_SUITE("attack") {

TEST_CASE("k = 0 yields the zero vector") {
  Rng rng(1);
  CHECK(random_attack(0, 0.5, 85, rng).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("support size is exactly k") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const AttackVector a = random_attack(3, 0.5, 85, rng);
    int nonzeros = 0;
    for (int i = 0; i < a.size(); ++i) nonzeros += a(i) != 0.0 ? 1 : 0;
    CHECK(nonzeros == 3);
  }
}

TEST_CASE("support indices are distinct and in range") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto support = random_support(10, 85, rng);
    std::set<std::size_t> unique(support.begin(), support.end());
    CHECK(unique.size() == 10);
    CHECK(*unique.rbegin() < 85);
  }
}

TEST_CASE("full-support attack values have std 0.5 (Monte Carlo oracle)") {
  Rng rng(4);
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  for (int trial = 0; trial < 1200; ++trial) {
    const AttackVector a = random_attack(85, 0.5, 85, rng);
    for (int i = 0; i < a.size(); ++i) {
      sum += a(i);
      sum_sq += a(i) * a(i);
      ++count;
    }
  }
  REQUIRE(count >= 100000);
  const double mean = sum / double(count);
  const double stddev = std::sqrt(sum_sq / double(count) - mean * mean);
  CHECK(stddev == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("k > m is a contract error") {
  Rng rng(5);
  CHECK_THROWS_AS(random_attack(86, 0.5, 85, rng), ContractError);
}

TEST_CASE("random attacks are seeded-deterministic") {
  Rng a(77), b(77);
  const AttackVector va = random_attack(7, 0.5, 30, a);
  const AttackVector vb = random_attack(7, 0.5, 30, b);
  CHECK((va - vb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stealthy attack with c = 0 is zero") {
  Eigen::MatrixXd h(3, 2);
  h << 1, 0, 0, 1, 1, 1;
  CHECK(stealthy_attack(matrix_of(h), Eigen::Vector2d::Zero())
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("stealthy attack equals H c (hand product)") {
  Eigen::MatrixXd h(3, 2);
  h << 1, 0, 0, 1, 1, 1;
  const AttackVector a =
      stealthy_attack(matrix_of(h), Eigen::Vector2d(0.1, -0.2));
  CHECK(a(0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(a(1) == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(a(2) == doctest::Approx(-0.1).epsilon(1e-15));
}

TEST_CASE("stealthy attacks never move the J statistic") {
  const GridTopology topo = load_case39();
  const MeasurementMatrix h =
      build_h_matrix(topo, MeasurementConfig::default_for(topo));
  const NoiseModel noise = NoiseModel::uniform(h.m(), 0.01);
  Rng rng(6);
  Eigen::VectorXd z(85);
  for (int i = 0; i < 85; ++i) z(i) = 0.5 * rng.normal();
  const double j_clean = wls_estimate(z, h, noise).j_value;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd c(38);
    for (int i = 0; i < 38; ++i) c(i) = 2.0 * rng.uniform() - 1.0;
    const double j_attacked =
        wls_estimate(z + stealthy_attack(h, c), h, noise).j_value;
    CHECK(std::abs(j_attacked - j_clean) < 1e-9);
  }
}

TEST_CASE("stealthy dimension mismatch is a contract error") {
  Eigen::MatrixXd h(3, 2);
  h << 1, 0, 0, 1, 1, 1;
  CHECK_THROWS_AS(stealthy_attack(matrix_of(h), Eigen::Vector3d::Zero()),
                  ContractError);
}

TEST_CASE("random attacks raise the expected J statistic (Monte Carlo)") {
  // Small 3-bus system keeps 10^4 paired trials cheap; the effect size is
  // enormous (attack std 0.5 vs meter noise 0.01).
  const GridTopology topo =
      GridTopology({1, 2, 3}, {{1, 1, 2, 1.0}, {2, 2, 3, 1.0}}, 1, {1});
  MeasurementConfig config;
  for (const Line& line : topo.lines())
    config.entries.push_back(LineFlow{line.id, FlowDirection::FromTo});
  for (int bus : topo.buses()) config.entries.push_back(BusInjection{bus});
  const MeasurementMatrix h = build_h_matrix(topo, config);
  const NoiseModel noise = NoiseModel::uniform(h.m(), 0.01);

  Rng rng(7);
  double j_clean_sum = 0.0, j_attacked_sum = 0.0;
  const int trials = 10000;
  for (int trial = 0; trial < trials; ++trial) {
    StateVector x{Eigen::Vector2d(0.01 * rng.normal(), 0.01 * rng.normal())};
    const MeasurementVector z = measure(x, h, noise, rng);
    j_clean_sum += wls_estimate(z, h, noise).j_value;
    const AttackVector a = random_attack(1, 0.5, h.m(), rng);
    j_attacked_sum += wls_estimate(z + a, h, noise).j_value;
  }
  CHECK(j_attacked_sum / trials > j_clean_sum / trials);
}

TEST_CASE("attacking capability is k over n") {
  CHECK(attacking_capability(0, 85) == 0.0);
  CHECK(attacking_capability(85, 85) == 1.0);
  CHECK(attacking_capability(17, 85) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(attacking_capability(86, 85), ContractError);
  CHECK_THROWS_AS(attacking_capability(1, 0), ContractError);
}

TEST_CASE("replay of a zero-length window is all zeros") {
  Trace victim;
  victim.sample_rate = 10;
  for (std::size_t t = 0; t < 5; ++t) {
    victim.timestamps.push_back(t);
    victim.states.push_back(StateVector{Eigen::Vector2d::Zero()});
    victim.z.push_back(Eigen::Vector3d::Constant(double(t)));
    victim.labels.push_back(0);
  }
  const auto attack = replay_attack(victim, victim, 0, SampleWindow{2, 2});
  REQUIRE(attack.size() == 5);
  for (const AttackVector& a : attack) CHECK(a.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("self-replay at offset 0 is the zero attack") {
  Trace victim;
  victim.sample_rate = 10;
  Rng rng(8);
  for (std::size_t t = 0; t < 6; ++t) {
    victim.timestamps.push_back(t);
    victim.states.push_back(StateVector{Eigen::Vector2d::Zero()});
    victim.z.push_back(Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()));
    victim.labels.push_back(0);
  }
  const auto attack = replay_attack(victim, victim, 0, SampleWindow{0, 6});
  for (const AttackVector& a : attack) CHECK(a.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("replay substitutes the recorded stream inside the window") {
  Trace victim, recorded;
  victim.sample_rate = recorded.sample_rate = 10;
  for (std::size_t t = 0; t < 8; ++t) {
    victim.timestamps.push_back(t);
    victim.states.push_back(StateVector{Eigen::Vector2d::Zero()});
    victim.z.push_back(Eigen::Vector2d(double(t), 0.0));
    victim.labels.push_back(0);
    recorded.timestamps.push_back(t);
    recorded.states.push_back(StateVector{Eigen::Vector2d::Zero()});
    recorded.z.push_back(Eigen::Vector2d(100.0 + double(t), 1.0));
    recorded.labels.push_back(0);
  }
  const SampleWindow window{3, 6};
  const auto attack = replay_attack(victim, recorded, 2, window);
  for (std::size_t t = 0; t < 8; ++t) {
    const Eigen::VectorXd substituted = victim.z[t] + attack[t];
    if (window.contains(t)) {
      CHECK((substituted - recorded.z[2 + t - 3]).cwiseAbs().maxCoeff() == 0.0);
    } else {
      CHECK(attack[t].cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("replay window past the recording is a contract error") {
  Trace victim;
  victim.sample_rate = 10;
  for (std::size_t t = 0; t < 8; ++t) {
    victim.timestamps.push_back(t);
    victim.states.push_back(StateVector{Eigen::Vector2d::Zero()});
    victim.z.push_back(Eigen::Vector2d::Zero());
    victim.labels.push_back(0);
  }
  Trace recorded = victim;
  recorded.timestamps.resize(4);
  recorded.states.resize(4);
  recorded.z.resize(4);
  recorded.labels.resize(4);
  CHECK_THROWS_AS(replay_attack(victim, recorded, 2, SampleWindow{0, 4}),
                  ContractError);
}

}  // TEST_SUITE
