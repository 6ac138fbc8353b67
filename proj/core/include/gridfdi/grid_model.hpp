#pragma once

#include <Eigen/Dense>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "gridfdi/errors.hpp"
#include "gridfdi/rng.hpp"

namespace gridfdi {

using MeasurementVector = Eigen::VectorXd;  // per-unit power, length m

struct Line {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double susceptance = 0.0;  // per-unit, strictly positive
};

/// The power network: buses, lines with susceptances, reference bus and
/// generator set. Immutable after construction.
class GridTopology {
 public:
  GridTopology(std::vector<int> buses, std::vector<Line> lines,
               int reference_bus, std::set<int> generator_buses);

  const std::vector<int>& buses() const noexcept { return buses_; }
  const std::vector<Line>& lines() const noexcept { return lines_; }
  int reference_bus() const noexcept { return reference_bus_; }
  const std::set<int>& generator_buses() const noexcept {
    return generator_buses_;
  }

  int n_buses() const noexcept { return static_cast<int>(buses_.size()); }
  /// Free (estimated) angles: every bus except the reference.
  int n_free() const noexcept { return n_buses() - 1; }

  bool has_bus(int bus) const { return bus_column_.count(bus) != 0; }
  const Line& line(int line_id) const;

  /// Column of H for a given non-reference bus; -1 for the reference.
  int free_column(int bus) const;
  /// Inverse of free_column.
  int bus_for_column(int column) const;

  bool is_connected() const;

 private:
  std::vector<int> buses_;
  std::vector<Line> lines_;
  int reference_bus_;
  std::set<int> generator_buses_;
  std::map<int, int> bus_column_;  // bus id -> free column, ref -> -1
  std::vector<int> column_bus_;
  std::map<int, int> line_index_by_id_;
};

/// Bus voltage angles (radians) for the free buses; the reference angle is 0.
struct StateVector {
  Eigen::VectorXd angles;  // length n_free, ordered by free column

  /// Angle of any bus, including the reference.
  double angle_of(const GridTopology& topo, int bus) const;
};

enum class FlowDirection { FromTo, ToFrom };

struct LineFlow {
  int line_id = 0;
  FlowDirection direction = FlowDirection::FromTo;
  bool operator==(const LineFlow&) const = default;
  auto operator<=>(const LineFlow&) const = default;
};

struct BusInjection {
  int bus = 0;
  bool operator==(const BusInjection&) const = default;
  auto operator<=>(const BusInjection&) const = default;
};

using MeasurementDescriptor = std::variant<LineFlow, BusInjection>;

/// Ordered list of meters. m = entries.size() must exceed n_free and the
/// resulting H must have full column rank (checked by build_h_matrix).
struct MeasurementConfig {
  std::vector<MeasurementDescriptor> entries;

  int m() const noexcept { return static_cast<int>(entries.size()); }

  /// All 46 from-end line flows followed by all 39 bus injections (m = 85).
  static MeasurementConfig default_for(const GridTopology& topo);
};

/// The DC measurement matrix H (m x n_free) together with its config.
struct MeasurementMatrix {
  Eigen::MatrixXd h;
  MeasurementConfig config;

  int m() const noexcept { return static_cast<int>(h.rows()); }
  int n_free() const noexcept { return static_cast<int>(h.cols()); }
};

/// Per-meter noise standard deviations; R = diag(sigma^2).
struct NoiseModel {
  Eigen::VectorXd sigma;

  static NoiseModel uniform(int m, double sigma_value);
};

/// Parse the bundled 39-bus, 46-line case. Deterministic.
GridTopology load_case39();
/// Same parser over an on-disk case file (schema documented in the data file).
GridTopology load_case(const std::string& path);
/// Parse case data from text; LoadError messages carry 1-based line numbers.
GridTopology parse_case(const std::string& text, const std::string& origin);

/// Build H: a LineFlow row for line (i, j) has +b_ij at i and -b_ij at j
/// (reference entries dropped); a BusInjection row is the signed sum of the
/// incident flow rows. Throws ObservabilityError if rank(H) < n_free.
MeasurementMatrix build_h_matrix(const GridTopology& topo,
                                 const MeasurementConfig& config);

/// z = H x + e with e ~ N(0, diag(sigma^2)).
MeasurementVector measure(const StateVector& state,
                          const MeasurementMatrix& h, const NoiseModel& noise,
                          Rng& rng);

/// Solve the DC flow B_ff * theta = p for the free angles given per-bus
/// injections (reference bus injection is the implicit slack).
StateVector solve_dc_state(const GridTopology& topo,
                           const std::map<int, double>& bus_injections);

/// Injections implied by a state: p = B * theta over all buses.
std::map<int, double> bus_injections_of(const GridTopology& topo,
                                        const StateVector& state);

}  // namespace gridfdi
