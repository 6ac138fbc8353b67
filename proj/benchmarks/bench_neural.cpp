#include <benchmark/benchmark.h>

#include "gridfdi/detector.hpp"
#include "gridfdi/neural.hpp"

using namespace gridfdi;
using neural::Tensor;

static void BM_LstmCellStep(benchmark::State& state) {
  Rng rng(1);
  neural::LstmCellParams cell;
  cell.init(85, 64, rng);
  Tensor x({85}), h({64}), c({64});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  for (auto _ : state)
    benchmark::DoNotOptimize(neural::lstm_cell_step(cell, x, h, c));
}
BENCHMARK(BM_LstmCellStep);

static void BM_BiLstmWindowForward(benchmark::State& state) {
  Rng rng(2);
  neural::BiLstmLayerParams layer;
  layer.init(85, 64, rng);
  Tensor seq({20, 85});
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = rng.normal();
  for (auto _ : state) {
    neural::BiLstmCache cache;
    benchmark::DoNotOptimize(neural::bilstm_forward(layer, seq, cache));
  }
}
BENCHMARK(BM_BiLstmWindowForward);

static void BM_PredictNextDefaultArch(benchmark::State& state) {
  Rng rng(3);
  DetectorArchitecture arch;  // 3 bilstm layers, hidden 64, window 20
  DetectorModel model = DetectorModel::create(arch, 85, rng);
  model.mark_trained();
  std::vector<MeasurementVector> window(20);
  for (auto& z : window) {
    z = MeasurementVector(85);
    for (int i = 0; i < 85; ++i) z(i) = rng.normal();
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(model.predict_next(
        std::span<const MeasurementVector>(window.data(), window.size())));
}
BENCHMARK(BM_PredictNextDefaultArch);

static void BM_Conv1dEqualizer(benchmark::State& state) {
  Rng rng(4);
  neural::Conv1dParams conv;
  conv.init(85, 32, 3, 1, 1, rng);
  Tensor input({85, 20});
  for (std::size_t i = 0; i < input.size(); ++i) input[i] = rng.normal();
  for (auto _ : state)
    benchmark::DoNotOptimize(neural::conv1d_forward(conv, input));
}
BENCHMARK(BM_Conv1dEqualizer);
