#include "gridfdi/grid_model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <sstream>

namespace gridfdi {

namespace detail {
extern const char* kCase39Data;  // generated from data/case39.grid
}

GridTopology::GridTopology(std::vector<int> buses, std::vector<Line> lines,
                           int reference_bus, std::set<int> generator_buses)
    : buses_(std::move(buses)),
      lines_(std::move(lines)),
      reference_bus_(reference_bus),
      generator_buses_(std::move(generator_buses)) {
  if (buses_.empty()) throw ContractError("topology: no buses");
  int column = 0;
  for (int bus : buses_) {
    if (bus_column_.count(bus))
      throw ContractError("topology: duplicate bus id " + std::to_string(bus));
    if (bus == reference_bus_) {
      bus_column_[bus] = -1;
    } else {
      bus_column_[bus] = column++;
      column_bus_.push_back(bus);
    }
  }
  if (!bus_column_.count(reference_bus_))
    throw ContractError("topology: reference bus " +
                        std::to_string(reference_bus_) + " not in bus list");
  for (std::size_t i = 0; i < lines_.size(); ++i) {
    const Line& line = lines_[i];
    if (line.from_bus == line.to_bus)
      throw ContractError("topology: self-loop on bus " +
                          std::to_string(line.from_bus));
    if (!bus_column_.count(line.from_bus) || !bus_column_.count(line.to_bus))
      throw ContractError("topology: line " + std::to_string(line.id) +
                          " references an unknown bus");
    if (!(line.susceptance > 0.0))
      throw ContractError("topology: line " + std::to_string(line.id) +
                          " must have positive susceptance");
    if (line_index_by_id_.count(line.id))
      throw ContractError("topology: duplicate line id " +
                          std::to_string(line.id));
    line_index_by_id_[line.id] = static_cast<int>(i);
  }
  for (int gen : generator_buses_)
    if (!bus_column_.count(gen))
      throw ContractError("topology: generator bus " + std::to_string(gen) +
                          " not in bus list");
  if (!is_connected()) throw ContractError("topology: graph is not connected");
}

const Line& GridTopology::line(int line_id) const {
  auto it = line_index_by_id_.find(line_id);
  if (it == line_index_by_id_.end())
    throw ContractError("topology: unknown line id " + std::to_string(line_id));
  return lines_[it->second];
}

int GridTopology::free_column(int bus) const {
  auto it = bus_column_.find(bus);
  if (it == bus_column_.end())
    throw ContractError("topology: unknown bus id " + std::to_string(bus));
  return it->second;
}

int GridTopology::bus_for_column(int column) const {
  if (column < 0 || column >= static_cast<int>(column_bus_.size()))
    throw ContractError("topology: column out of range");
  return column_bus_[column];
}

bool GridTopology::is_connected() const {
  if (buses_.empty()) return false;
  std::map<int, std::vector<int>> adjacency;
  for (const Line& line : lines_) {
    adjacency[line.from_bus].push_back(line.to_bus);
    adjacency[line.to_bus].push_back(line.from_bus);
  }
  std::set<int> seen{buses_.front()};
  std::queue<int> frontier;
  frontier.push(buses_.front());
  while (!frontier.empty()) {
    int bus = frontier.front();
    frontier.pop();
    for (int next : adjacency[bus])
      if (seen.insert(next).second) frontier.push(next);
  }
  return seen.size() == buses_.size();
}

double StateVector::angle_of(const GridTopology& topo, int bus) const {
  const int column = topo.free_column(bus);
  return column < 0 ? 0.0 : angles(column);
}

MeasurementConfig MeasurementConfig::default_for(const GridTopology& topo) {
  MeasurementConfig config;
  for (const Line& line : topo.lines())
    config.entries.push_back(LineFlow{line.id, FlowDirection::FromTo});
  for (int bus : topo.buses()) config.entries.push_back(BusInjection{bus});
  return config;
}

NoiseModel NoiseModel::uniform(int m, double sigma_value) {
  if (!(sigma_value > 0.0))
    throw ContractError("noise: sigma must be positive");
  NoiseModel noise;
  noise.sigma = Eigen::VectorXd::Constant(m, sigma_value);
  return noise;
}

namespace {

struct CaseLineReader {
  std::istringstream stream;
  std::string origin;
  int line_no = 0;

  explicit CaseLineReader(const std::string& text, std::string origin_name)
      : stream(text), origin(std::move(origin_name)) {}

  [[noreturn]] void fail(const std::string& message) const {
    throw LoadError(origin + ":" + std::to_string(line_no) + ": " + message);
  }

  /// Next non-empty, non-comment line; false at end of input.
  bool next(std::string& out) {
    std::string raw;
    while (std::getline(stream, raw)) {
      ++line_no;
      const auto start = raw.find_first_not_of(" \t\r");
      if (start == std::string::npos || raw[start] == '#') continue;
      out = raw;
      return true;
    }
    return false;
  }
};

}  // namespace

GridTopology parse_case(const std::string& text, const std::string& origin) {
  CaseLineReader reader(text, origin);
  std::string line;

  if (!reader.next(line)) reader.fail("empty case file");
  std::istringstream header(line);
  std::string keyword;
  int n_buses = 0;
  if (!(header >> keyword >> n_buses) || keyword != "buses" || n_buses <= 0)
    reader.fail("expected 'buses <count>'");

  std::vector<int> buses;
  std::set<int> generators;
  int reference = 0;
  bool have_reference = false;
  for (int i = 0; i < n_buses; ++i) {
    if (!reader.next(line)) reader.fail("unexpected end of bus section");
    std::istringstream row(line);
    int bus = 0, is_gen = 0, is_ref = 0;
    if (!(row >> bus >> is_gen >> is_ref))
      reader.fail("bad bus row, expected '<id> <is_generator> <is_reference>'");
    buses.push_back(bus);
    if (is_gen) generators.insert(bus);
    if (is_ref) {
      if (have_reference) reader.fail("more than one reference bus");
      reference = bus;
      have_reference = true;
    }
  }
  if (!have_reference) reader.fail("no reference bus flagged");

  if (!reader.next(line)) reader.fail("missing line section");
  std::istringstream lines_header(line);
  int n_lines = 0;
  if (!(lines_header >> keyword >> n_lines) || keyword != "lines" ||
      n_lines <= 0)
    reader.fail("expected 'lines <count>'");

  std::vector<Line> lines;
  for (int i = 0; i < n_lines; ++i) {
    if (!reader.next(line)) reader.fail("unexpected end of line section");
    std::istringstream row(line);
    Line entry;
    if (!(row >> entry.id >> entry.from_bus >> entry.to_bus >>
          entry.susceptance))
      reader.fail("bad line row, expected '<id> <from> <to> <susceptance>'");
    if (!(entry.susceptance > 0.0))
      reader.fail("susceptance must be positive");
    lines.push_back(entry);
  }

  try {
    return GridTopology(std::move(buses), std::move(lines), reference,
                        std::move(generators));
  } catch (const ContractError& e) {
    throw LoadError(origin + ": " + e.what());
  }
}

GridTopology load_case39() { return parse_case(detail::kCase39Data, "case39"); }

GridTopology load_case(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw LoadError(path + ": cannot open case file");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_case(buffer.str(), path);
}

namespace {

void add_flow_row(Eigen::MatrixXd& h, int row, const GridTopology& topo,
                  const Line& line, double sign) {
  const int from_col = topo.free_column(line.from_bus);
  const int to_col = topo.free_column(line.to_bus);
  if (from_col >= 0) h(row, from_col) += sign * line.susceptance;
  if (to_col >= 0) h(row, to_col) -= sign * line.susceptance;
}

}  // namespace

MeasurementMatrix build_h_matrix(const GridTopology& topo,
                                 const MeasurementConfig& config) {
  const int m = config.m();
  const int n = topo.n_free();
  if (m <= 0) throw ContractError("h matrix: empty measurement config");

  std::set<MeasurementDescriptor> dedupe(config.entries.begin(),
                                         config.entries.end());
  if (static_cast<int>(dedupe.size()) != m)
    throw ContractError("h matrix: duplicate measurement descriptor");

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, n);
  for (int row = 0; row < m; ++row) {
    const MeasurementDescriptor& entry = config.entries[row];
    if (const auto* flow = std::get_if<LineFlow>(&entry)) {
      const Line& line = topo.line(flow->line_id);
      const double sign =
          flow->direction == FlowDirection::FromTo ? 1.0 : -1.0;
      add_flow_row(h, row, topo, line, sign);
    } else {
      const auto& injection = std::get<BusInjection>(entry);
      if (!topo.has_bus(injection.bus))
        throw ContractError("h matrix: unknown injection bus " +
                            std::to_string(injection.bus));
      // Injection at k = sum of flows leaving k over incident lines.
      for (const Line& line : topo.lines()) {
        if (line.from_bus == injection.bus) {
          add_flow_row(h, row, topo, line, 1.0);
        } else if (line.to_bus == injection.bus) {
          add_flow_row(h, row, topo, line, -1.0);
        }
      }
    }
  }

  const auto rank = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(h).rank();
  if (rank < n)
    throw ObservabilityError(
        "h matrix: configuration leaves " + std::to_string(n - rank) +
            " angle dimension(s) unobservable (rank " + std::to_string(rank) +
            " of " + std::to_string(n) + ")",
        static_cast<int>(n - rank));

  return MeasurementMatrix{std::move(h), config};
}

MeasurementVector measure(const StateVector& state,
                          const MeasurementMatrix& h, const NoiseModel& noise,
                          Rng& rng) {
  if (state.angles.size() != h.n_free())
    throw ContractError("measure: state dimension " +
                        std::to_string(state.angles.size()) +
                        " does not match H columns " +
                        std::to_string(h.n_free()));
  if (noise.sigma.size() != h.m())
    throw ContractError("measure: noise dimension does not match H rows");
  MeasurementVector z = h.h * state.angles;
  for (int i = 0; i < z.size(); ++i) z(i) += noise.sigma(i) * rng.normal();
  return z;
}

StateVector solve_dc_state(const GridTopology& topo,
                           const std::map<int, double>& bus_injections) {
  const int n = topo.n_free();
  Eigen::MatrixXd laplacian = Eigen::MatrixXd::Zero(n, n);
  for (const Line& line : topo.lines()) {
    const int i = topo.free_column(line.from_bus);
    const int j = topo.free_column(line.to_bus);
    if (i >= 0) laplacian(i, i) += line.susceptance;
    if (j >= 0) laplacian(j, j) += line.susceptance;
    if (i >= 0 && j >= 0) {
      laplacian(i, j) -= line.susceptance;
      laplacian(j, i) -= line.susceptance;
    }
  }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  for (const auto& [bus, injection] : bus_injections) {
    const int column = topo.free_column(bus);
    if (column >= 0) p(column) = injection;
  }
  Eigen::LDLT<Eigen::MatrixXd> solver(laplacian);
  if (solver.info() != Eigen::Success)
    throw SingularSystemError("dc solve: reduced susceptance matrix singular");
  StateVector state{solver.solve(p)};
  for (int i = 0; i < state.angles.size(); ++i)
    if (!std::isfinite(state.angles(i)) ||
        std::abs(state.angles(i)) >= std::numbers::pi)
      throw ContractError("dc solve: angle out of range at column " +
                          std::to_string(i));
  return state;
}

std::map<int, double> bus_injections_of(const GridTopology& topo,
                                        const StateVector& state) {
  std::map<int, double> injections;
  for (int bus : topo.buses()) injections[bus] = 0.0;
  for (const Line& line : topo.lines()) {
    const double flow = line.susceptance * (state.angle_of(topo, line.from_bus) -
                                            state.angle_of(topo, line.to_bus));
    injections[line.from_bus] += flow;
    injections[line.to_bus] -= flow;
  }
  return injections;
}

}  // namespace gridfdi
