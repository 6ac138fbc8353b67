#include <benchmark/benchmark.h>

#include "gridfdi/estimation.hpp"
#include "gridfdi/harness.hpp"

using namespace gridfdi;

namespace {

struct Fixture {
  GridTopology topo = load_case39();
  MeasurementMatrix h = build_h_matrix(topo, MeasurementConfig::default_for(topo));
  NoiseModel noise = NoiseModel::uniform(85, 0.01);
  StateVector base = nominal_state(topo);
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

static void BM_BuildHMatrix(benchmark::State& state) {
  const GridTopology topo = load_case39();
  const MeasurementConfig config = MeasurementConfig::default_for(topo);
  for (auto _ : state)
    benchmark::DoNotOptimize(build_h_matrix(topo, config));
}
BENCHMARK(BM_BuildHMatrix);

static void BM_WlsEstimateCase39(benchmark::State& state) {
  Fixture& f = fixture();
  Rng rng(1);
  const MeasurementVector z = measure(f.base, f.h, f.noise, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(wls_estimate(z, f.h, f.noise));
}
BENCHMARK(BM_WlsEstimateCase39);

static void BM_StaticDetect(benchmark::State& state) {
  Fixture& f = fixture();
  Rng rng(2);
  const MeasurementVector z = measure(f.base, f.h, f.noise, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(static_detect(z, f.h, f.noise, 0.05));
}
BENCHMARK(BM_StaticDetect);

static void BM_ChiSquareThreshold(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(chi_square_threshold(47, 0.05));
}
BENCHMARK(BM_ChiSquareThreshold);
