#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridfdi/detector.hpp"
#include "gridfdi/estimation.hpp"

namespace gridfdi {

/// Confusion counts with attack as the positive class.
struct Metrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  double accuracy() const {
    return total() ? double(tp + tn) / double(total()) : 0.0;
  }
  double precision() const { return tp + fp ? double(tp) / double(tp + fp) : 0.0; }
  double recall() const { return tp + fn ? double(tp) / double(tp + fn) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
};

/// Confusion counts of detector verdicts against ground-truth labels.
Metrics evaluate(const std::vector<Verdict>& verdicts,
                 std::span<const std::uint8_t> labels);

/// Everything one bench run needs; every field has a default so a config
/// file may specify only what it overrides.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  // scenario
  double duration_s = 350.0;
  std::size_t sample_rate = 10;
  double load_walk_sigma = 1e-3;
  double mean_reversion = 0.98;
  double noise_sigma = 0.01;
  std::vector<GeneratorTripEvent> events;

  // chronological split
  double train_fraction = 0.6;
  double val_fraction = 0.2;

  // random-attack sweep
  std::vector<std::size_t> k_sweep = {8, 17, 26, 34, 43, 51, 60, 68, 77};
  double attack_sigma = 0.5;
  double attack_fraction = 0.5;  // share of each span covered by the window

  DetectorArchitecture architecture;
  TrainingOptions training;

  bool with_static = false;
  double alpha = kDefaultAlpha;

  void validate() const;
};

/// Read a JSON config document (schema in the README); missing keys keep
/// their defaults.
ExperimentConfig load_experiment_config(const std::string& path);

struct ExperimentRow {
  std::size_t k = 0;
  double capability = 0.0;
  double tau = 0.0;
  Metrics dynamic_metrics;
  std::optional<Metrics> static_metrics;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  std::string metrics_csv_path;
  std::string checkpoint_path;
};

/// The full pipeline: simulate benign data, split chronologically, train on
/// the benign train span, then per k inject random attacks into copies of the
/// validation and test spans, calibrate tau on validation and evaluate on
/// test. Writes traces, the checkpoint, per-k verdict CSVs and metrics.csv
/// under out_dir. Deterministic for a fixed (config, seed).
/// Errors carry the failing stage via StageError.
ExperimentResult run_experiment(const ExperimentConfig& config);

void save_metrics_csv(const std::vector<ExperimentRow>& rows, bool with_static,
                      const std::string& path);
std::vector<ExperimentRow> load_metrics_csv(const std::string& path);

/// Nominal operating point for a topology: each non-reference generator
/// injects 1 p.u., the load buses share the balancing draw equally.
StateVector nominal_state(const GridTopology& topo);

}  // namespace gridfdi
