#include "gridfdi/scenario.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gridfdi {

namespace {

using nlohmann::json;

/// Shortest representation that parses back to the identical double.
std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

json window_to_json(const SampleWindow& w) {
  return json::array({w.begin, w.end});
}

SampleWindow window_from_json(const json& j) {
  return SampleWindow{j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()};
}

json spec_to_json(const AttackSpec& spec) {
  json j;
  if (const auto* random = std::get_if<RandomGaussianAttack>(&spec.kind)) {
    j["kind"] = "random";
    j["k"] = random->k;
    j["sigma"] = random->sigma;
  } else if (const auto* stealthy = std::get_if<StealthyAttack>(&spec.kind)) {
    j["kind"] = "stealthy";
    j["c"] = std::vector<double>(stealthy->c.data(),
                                 stealthy->c.data() + stealthy->c.size());
  } else {
    const auto& replay = std::get<ReplayEventAttack>(spec.kind);
    j["kind"] = "replay";
    j["trace_id"] = replay.trace_id;
    j["offset"] = replay.offset;
  }
  j["window"] = window_to_json(spec.window);
  return j;
}

AttackSpec spec_from_json(const json& j) {
  AttackSpec spec;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "random") {
    spec.kind = RandomGaussianAttack{j.at("k").get<std::size_t>(),
                                     j.at("sigma").get<double>()};
  } else if (kind == "stealthy") {
    const auto values = j.at("c").get<std::vector<double>>();
    StealthyAttack stealthy;
    stealthy.c = Eigen::Map<const Eigen::VectorXd>(
        values.data(), static_cast<Eigen::Index>(values.size()));
    spec.kind = std::move(stealthy);
  } else if (kind == "replay") {
    spec.kind = ReplayEventAttack{j.at("trace_id").get<std::string>(),
                                  j.at("offset").get<std::size_t>()};
  } else {
    throw LoadError("trace: unknown attack kind '" + kind + "'");
  }
  spec.window = window_from_json(j.at("window"));
  return spec;
}

}  // namespace

Trace simulate(const ScenarioConfig& config, const GridTopology& topo,
               const MeasurementMatrix& h, const NoiseModel& noise, Rng& rng) {
  if (!(config.duration_s > 0.0))
    throw ContractError("scenario: duration must be positive");
  if (config.sample_rate == 0)
    throw ContractError("scenario: sample rate must be positive");
  if (config.base_state.angles.size() != topo.n_free() ||
      h.n_free() != topo.n_free())
    throw ContractError("scenario: state/H dimensions do not match topology");
  if (!(config.mean_reversion >= 0.0) || !(config.mean_reversion <= 1.0))
    throw ContractError("scenario: mean_reversion must lie in [0, 1]");
  if (config.load_walk_sigma < 0.0)
    throw ContractError("scenario: load_walk_sigma must be >= 0");

  const std::size_t n_samples = config.n_samples();
  const int n_free = topo.n_free();

  // Persistent step change per generator trip, from a DC re-solve with the
  // tripped unit's injection removed (the reference bus picks up the slack).
  struct ActiveEvent {
    std::size_t start = 0;
    Eigen::VectorXd step;
  };
  std::vector<ActiveEvent> steps;
  const auto base_injections = bus_injections_of(topo, config.base_state);
  for (const GeneratorTripEvent& event : config.events) {
    if (!topo.generator_buses().count(event.bus))
      throw ContractError("scenario: trip event bus " +
                          std::to_string(event.bus) + " is not a generator");
    if (event.bus == topo.reference_bus())
      throw ContractError("scenario: cannot trip the reference bus");
    if (event.time_s < 0.0)
      throw ContractError("scenario: event time must be >= 0");
    auto injections = base_injections;
    injections[event.bus] = 0.0;
    const StateVector tripped = solve_dc_state(topo, injections);
    steps.push_back(
        {static_cast<std::size_t>(event.time_s * config.sample_rate + 0.5),
         tripped.angles - config.base_state.angles});
  }

  Trace trace;
  trace.sample_rate = config.sample_rate;
  trace.timestamps.reserve(n_samples);
  trace.states.reserve(n_samples);
  trace.z.reserve(n_samples);
  trace.labels.assign(n_samples, 0);

  Eigen::VectorXd deviation = Eigen::VectorXd::Zero(n_free);
  for (std::size_t t = 0; t < n_samples; ++t) {
    if (t > 0) {
      deviation *= config.mean_reversion;
      for (int i = 0; i < n_free; ++i)
        deviation(i) += config.load_walk_sigma * rng.normal();
    }
    StateVector state{config.base_state.angles + deviation};
    for (const ActiveEvent& event : steps)
      if (t >= event.start) state.angles += event.step;
    trace.timestamps.push_back(t);
    trace.z.push_back(measure(state, h, noise, rng));
    trace.states.push_back(std::move(state));
  }
  return trace;
}

Trace inject(const Trace& trace, const AttackSpec& spec,
             const MeasurementMatrix& h, Rng& rng,
             const TraceLibrary& library) {
  if (spec.window.begin > spec.window.end)
    throw ContractError("inject: window begin exceeds end");
  if (spec.window.end > trace.size())
    throw ContractError("inject: window [" +
                        std::to_string(spec.window.begin) + ", " +
                        std::to_string(spec.window.end) +
                        ") exceeds trace length " +
                        std::to_string(trace.size()));

  Trace attacked = trace;
  attacked.attack_meta = spec;

  if (const auto* random = std::get_if<RandomGaussianAttack>(&spec.kind)) {
    const std::size_t m = static_cast<std::size_t>(h.m());
    // One support per attack: the adversary owns a fixed set of meters.
    const auto support = random_support(random->k, m, rng);
    for (std::size_t t = spec.window.begin; t < spec.window.end; ++t)
      attacked.z[t] += gaussian_on_support(support, random->sigma, m, rng);
  } else if (const auto* stealthy = std::get_if<StealthyAttack>(&spec.kind)) {
    const AttackVector a = stealthy_attack(h, stealthy->c);
    for (std::size_t t = spec.window.begin; t < spec.window.end; ++t)
      attacked.z[t] += a;
  } else {
    const auto& replay = std::get<ReplayEventAttack>(spec.kind);
    auto it = library.find(replay.trace_id);
    if (it == library.end())
      throw ContractError("inject: unknown recorded trace id '" +
                          replay.trace_id + "'");
    const auto vectors =
        replay_attack(trace, it->second, replay.offset, spec.window);
    for (std::size_t t = spec.window.begin; t < spec.window.end; ++t)
      attacked.z[t] += vectors[t];
  }

  for (std::size_t t = spec.window.begin; t < spec.window.end; ++t)
    attacked.labels[t] = 1;
  return attacked;
}

TraceSplit split_trace(const Trace& trace, double train_fraction,
                       double val_fraction) {
  if (!(train_fraction >= 0.0) || !(val_fraction >= 0.0) ||
      train_fraction + val_fraction > 1.0)
    throw ContractError("split: fractions must be nonnegative and sum <= 1");
  const std::size_t n = trace.size();
  const auto n_train = static_cast<std::size_t>(n * train_fraction);
  const auto n_val = static_cast<std::size_t>(n * val_fraction);

  auto slice = [&](std::size_t begin, std::size_t end) {
    Trace piece;
    piece.sample_rate = trace.sample_rate;
    piece.attack_meta = trace.attack_meta;
    piece.timestamps.assign(trace.timestamps.begin() + begin,
                            trace.timestamps.begin() + end);
    piece.states.assign(trace.states.begin() + begin,
                        trace.states.begin() + end);
    piece.z.assign(trace.z.begin() + begin, trace.z.begin() + end);
    piece.labels.assign(trace.labels.begin() + begin,
                        trace.labels.begin() + end);
    return piece;
  };

  return TraceSplit{slice(0, n_train), slice(n_train, n_train + n_val),
                    slice(n_train + n_val, n)};
}

void save_trace(const Trace& trace, const std::string& path) {
  const std::size_t n = trace.size();
  if (trace.states.size() != n || trace.z.size() != n ||
      trace.labels.size() != n)
    throw ContractError("trace: sequence lengths differ");
  const int m = n > 0 ? static_cast<int>(trace.z[0].size()) : 0;
  const int n_free = n > 0 ? static_cast<int>(trace.states[0].angles.size()) : 0;

  std::ofstream out(path);
  if (!out) throw LoadError(path + ": cannot open for writing");
  out << "gridfdi-trace v1\n";
  out << "m " << m << "\n";
  out << "n_free " << n_free << "\n";
  out << "sample_rate " << trace.sample_rate << "\n";
  if (trace.attack_meta)
    out << "attack " << spec_to_json(*trace.attack_meta).dump() << "\n";
  out << "samples " << n << "\n";
  for (std::size_t i = 0; i < n; ++i) {
    out << trace.timestamps[i];
    for (int j = 0; j < n_free; ++j)
      out << ',' << fmt_double(trace.states[i].angles(j));
    for (int j = 0; j < m; ++j) out << ',' << fmt_double(trace.z[i](j));
    out << ',' << int(trace.labels[i]) << "\n";
  }
  if (!out) throw LoadError(path + ": write failed");
}

Trace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path + ": cannot open trace file");
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& message) -> void {
    throw LoadError(path + ":" + std::to_string(line_no) + ": " + message);
  };
  auto next_line = [&]() {
    if (!std::getline(in, line)) fail("unexpected end of file");
    ++line_no;
  };

  next_line();
  if (line != "gridfdi-trace v1") fail("bad magic, expected 'gridfdi-trace v1'");

  Trace trace;
  int m = -1, n_free = -1;
  std::size_t n_samples = 0;
  bool have_samples = false;
  while (!have_samples) {
    next_line();
    std::istringstream header(line);
    std::string key;
    header >> key;
    if (key == "m") {
      header >> m;
    } else if (key == "n_free") {
      header >> n_free;
    } else if (key == "sample_rate") {
      header >> trace.sample_rate;
    } else if (key == "attack") {
      std::string payload;
      std::getline(header, payload);
      try {
        trace.attack_meta = spec_from_json(json::parse(payload));
      } catch (const json::exception& e) {
        fail(std::string("bad attack metadata: ") + e.what());
      }
    } else if (key == "samples") {
      header >> n_samples;
      have_samples = true;
    } else {
      fail("unknown header key '" + key + "'");
    }
    if (header.fail()) fail("bad header value for '" + key + "'");
  }
  if (m < 0 || n_free < 0) fail("header missing m or n_free");

  const std::size_t fields = 1 + n_free + m + 1;
  for (std::size_t i = 0; i < n_samples; ++i) {
    next_line();
    std::istringstream row(line);
    std::string cell;
    std::vector<double> values;
    values.reserve(fields);
    while (std::getline(row, cell, ',')) {
      const char* begin = cell.data();
      const char* end = begin + cell.size();
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(begin, end, v);
      if (ec != std::errc() || ptr != end) fail("bad numeric field '" + cell + "'");
      values.push_back(v);
    }
    if (values.size() != fields)
      fail("expected " + std::to_string(fields) + " fields, got " +
           std::to_string(values.size()));
    trace.timestamps.push_back(static_cast<std::size_t>(values[0]));
    StateVector state;
    state.angles = Eigen::Map<const Eigen::VectorXd>(values.data() + 1, n_free);
    trace.states.push_back(std::move(state));
    trace.z.push_back(Eigen::Map<const Eigen::VectorXd>(
        values.data() + 1 + n_free, m));
    trace.labels.push_back(values.back() != 0.0 ? 1 : 0);
  }
  return trace;
}

}  // namespace gridfdi
