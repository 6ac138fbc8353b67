#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridfdi/attack.hpp"
#include "gridfdi/grid_model.hpp"

namespace gridfdi {

struct GeneratorTripEvent {
  int bus = 0;
  double time_s = 0.0;
};

/// Operating-point dynamics for one simulation: a mean-reverting angle walk
/// around base_state plus step changes from generator trips.
struct ScenarioConfig {
  double duration_s = 0.0;
  std::size_t sample_rate = 10;  // Hz
  StateVector base_state;
  double load_walk_sigma = 1e-3;  // rad per step, innovation std
  double mean_reversion = 0.98;   // pull of the walk toward base_state
  std::vector<GeneratorTripEvent> events;

  std::size_t n_samples() const {
    return static_cast<std::size_t>(duration_s * sample_rate + 0.5);
  }
};

/// Time-stamped measurement sequence with ground-truth states and per-step
/// attack labels. All sequences share one length.
struct Trace {
  std::vector<std::size_t> timestamps;
  std::vector<StateVector> states;
  std::vector<MeasurementVector> z;
  std::vector<std::uint8_t> labels;  // 1 inside injected windows
  std::optional<AttackSpec> attack_meta;
  std::size_t sample_rate = 10;

  std::size_t size() const noexcept { return timestamps.size(); }
};

using TraceLibrary = std::map<std::string, Trace>;

struct TraceSplit {
  Trace train;
  Trace val;
  Trace test;
};

/// Benign simulation: walk + events, measured through H with meter noise.
/// All labels false.
Trace simulate(const ScenarioConfig& config, const GridTopology& topo,
               const MeasurementMatrix& h, const NoiseModel& noise, Rng& rng);

/// Apply an attack spec inside its window: random/stealthy perturbations are
/// added to z, replayed streams substitute it. Ground-truth states are left
/// untouched; labels inside the window become true.
Trace inject(const Trace& trace, const AttackSpec& spec,
             const MeasurementMatrix& h, Rng& rng,
             const TraceLibrary& library = {});

/// Chronological split; concatenating the pieces reproduces the input.
TraceSplit split_trace(const Trace& trace, double train_fraction,
                       double val_fraction);

/// Trace file format: a small key-value header (schema version, m, n_free,
/// sample_rate, optional attack metadata) followed by one CSV record per
/// sample ending in the label column. Doubles are printed with enough digits
/// to round-trip bit-exactly.
void save_trace(const Trace& trace, const std::string& path);
Trace load_trace(const std::string& path);

}  // namespace gridfdi
