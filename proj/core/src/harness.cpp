#include "gridfdi/harness.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gridfdi {

namespace fs = std::filesystem;
using nlohmann::json;

Metrics evaluate(const std::vector<Verdict>& verdicts,
                 std::span<const std::uint8_t> labels) {
  if (verdicts.size() != labels.size())
    throw ContractError("evaluate: verdict/label lengths differ (" +
                        std::to_string(verdicts.size()) + " vs " +
                        std::to_string(labels.size()) + ")");
  Metrics metrics;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const bool flagged = verdicts[i].is_attack;
    const bool attacked = labels[i] != 0;
    if (flagged && attacked) ++metrics.tp;
    if (flagged && !attacked) ++metrics.fp;
    if (!flagged && attacked) ++metrics.fn;
    if (!flagged && !attacked) ++metrics.tn;
  }
  return metrics;
}

void ExperimentConfig::validate() const {
  if (!(train_fraction > 0.0) || !(val_fraction > 0.0) ||
      train_fraction + val_fraction >= 1.0)
    throw ContractError("config: split fractions must be positive and leave a "
                        "test remainder");
  if (!(attack_fraction > 0.0) || attack_fraction > 1.0)
    throw ContractError("config: attack_fraction must lie in (0, 1]");
  if (!(attack_sigma > 0.0))
    throw ContractError("config: attack sigma must be positive");
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw ContractError("config: alpha must lie in (0, 1)");
  architecture.validate();
}

StateVector nominal_state(const GridTopology& topo) {
  std::map<int, double> injections;
  std::size_t n_load_buses = 0;
  double generation = 0.0;
  for (int bus : topo.buses()) {
    if (topo.generator_buses().count(bus)) {
      if (bus != topo.reference_bus()) {
        injections[bus] = 1.0;
        generation += 1.0;
      }
    } else {
      ++n_load_buses;
    }
  }
  if (n_load_buses == 0) throw ContractError("nominal state: no load buses");
  for (int bus : topo.buses())
    if (!topo.generator_buses().count(bus))
      injections[bus] = -generation / static_cast<double>(n_load_buses);
  return solve_dc_state(topo, injections);
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path + ": cannot open config file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(path + ": " + e.what());
  }

  ExperimentConfig config;
  try {
    config.seed = doc.value("seed", config.seed);
    config.out_dir = doc.value("out_dir", config.out_dir);
    if (doc.contains("scenario")) {
      const json& s = doc.at("scenario");
      config.duration_s = s.value("duration_s", config.duration_s);
      config.sample_rate = s.value("sample_rate", config.sample_rate);
      config.load_walk_sigma =
          s.value("load_walk_sigma", config.load_walk_sigma);
      config.mean_reversion = s.value("mean_reversion", config.mean_reversion);
      config.noise_sigma = s.value("noise_sigma", config.noise_sigma);
      if (s.contains("events"))
        for (const json& e : s.at("events"))
          config.events.push_back(GeneratorTripEvent{
              e.at("bus").get<int>(), e.at("time_s").get<double>()});
    }
    if (doc.contains("split")) {
      const json& s = doc.at("split");
      config.train_fraction = s.value("train", config.train_fraction);
      config.val_fraction = s.value("val", config.val_fraction);
    }
    if (doc.contains("attack")) {
      const json& a = doc.at("attack");
      if (a.contains("k_sweep"))
        config.k_sweep = a.at("k_sweep").get<std::vector<std::size_t>>();
      config.attack_sigma = a.value("sigma", config.attack_sigma);
      config.attack_fraction = a.value("fraction", config.attack_fraction);
    }
    if (doc.contains("detector")) {
      const json& d = doc.at("detector");
      const std::string variant = d.value("variant", std::string("dynamic"));
      if (variant == "combined")
        config.architecture.variant = DetectorArchitecture::Variant::Combined;
      else if (variant == "dynamic")
        config.architecture.variant =
            DetectorArchitecture::Variant::DynamicOnly;
      else
        throw LoadError(path + ": unknown detector variant '" + variant + "'");
      config.architecture.num_recurrent_layers =
          d.value("layers", config.architecture.num_recurrent_layers);
      config.architecture.hidden_size =
          d.value("hidden", config.architecture.hidden_size);
      config.architecture.window_len =
          d.value("window", config.architecture.window_len);
      config.architecture.conv_channels =
          d.value("conv_channels", config.architecture.conv_channels);
      config.architecture.conv_kernel_width =
          d.value("conv_kernel", config.architecture.conv_kernel_width);
      config.training.epochs = d.value("epochs", config.training.epochs);
      config.training.learning_rate =
          d.value("learning_rate", config.training.learning_rate);
    }
    if (doc.contains("static")) {
      const json& s = doc.at("static");
      config.with_static = s.value("enabled", config.with_static);
      config.alpha = s.value("alpha", config.alpha);
    }
  } catch (const json::exception& e) {
    throw LoadError(path + ": " + e.what());
  }
  return config;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename F>
auto stage(const std::string& label, F&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(label, e.what());
  }
}

SampleWindow central_window(std::size_t span_len, double fraction) {
  const auto len = static_cast<std::size_t>(span_len * fraction);
  const std::size_t begin = (span_len - len) / 2;
  return SampleWindow{begin, begin + len};
}

}  // namespace

void save_metrics_csv(const std::vector<ExperimentRow>& rows, bool with_static,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LoadError(path + ": cannot open for writing");
  out << "k,capability,tau,tp,fp,tn,fn,accuracy,precision,recall,f1";
  if (with_static)
    out << ",static_tp,static_fp,static_tn,static_fn,static_accuracy,"
           "static_precision,static_recall,static_f1";
  out << "\n";
  for (const ExperimentRow& row : rows) {
    const Metrics& m = row.dynamic_metrics;
    out << row.k << ',' << fmt_double(row.capability) << ','
        << fmt_double(row.tau) << ',' << m.tp << ',' << m.fp << ',' << m.tn
        << ',' << m.fn << ',' << fmt_double(m.accuracy()) << ','
        << fmt_double(m.precision()) << ',' << fmt_double(m.recall()) << ','
        << fmt_double(m.f1());
    if (with_static) {
      const Metrics s = row.static_metrics.value_or(Metrics{});
      out << ',' << s.tp << ',' << s.fp << ',' << s.tn << ',' << s.fn << ','
          << fmt_double(s.accuracy()) << ',' << fmt_double(s.precision())
          << ',' << fmt_double(s.recall()) << ',' << fmt_double(s.f1());
    }
    out << "\n";
  }
  if (!out) throw LoadError(path + ": write failed");
}

std::vector<ExperimentRow> load_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path + ": cannot open metrics file");
  std::string line;
  if (!std::getline(in, line)) throw LoadError(path + ": empty metrics file");
  const bool with_static = line.find("static_tp") != std::string::npos;

  std::vector<ExperimentRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row_stream(line);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(row_stream, cell, ','))
      cells.push_back(std::stod(cell));
    const std::size_t expected = with_static ? 19 : 11;
    if (cells.size() != expected)
      throw LoadError(path + ": bad metrics row '" + line + "'");
    ExperimentRow row;
    row.k = static_cast<std::size_t>(cells[0]);
    row.capability = cells[1];
    row.tau = cells[2];
    row.dynamic_metrics.tp = static_cast<std::size_t>(cells[3]);
    row.dynamic_metrics.fp = static_cast<std::size_t>(cells[4]);
    row.dynamic_metrics.tn = static_cast<std::size_t>(cells[5]);
    row.dynamic_metrics.fn = static_cast<std::size_t>(cells[6]);
    if (with_static) {
      Metrics s;
      s.tp = static_cast<std::size_t>(cells[11]);
      s.fp = static_cast<std::size_t>(cells[12]);
      s.tn = static_cast<std::size_t>(cells[13]);
      s.fn = static_cast<std::size_t>(cells[14]);
      row.static_metrics = s;
    }
    rows.push_back(row);
  }
  return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Rng root(config.seed);

  return stage("setup", [&] {
    fs::create_directories(config.out_dir);
    const GridTopology topo = stage("load", [&] { return load_case39(); });
    const MeasurementMatrix h = stage("load", [&] {
      return build_h_matrix(topo, MeasurementConfig::default_for(topo));
    });
    const auto m = static_cast<std::size_t>(h.m());
    const NoiseModel noise = NoiseModel::uniform(h.m(), config.noise_sigma);
    for (std::size_t k : config.k_sweep)
      if (k > m)
        throw StageError("setup", "k = " + std::to_string(k) +
                                      " exceeds meter count " +
                                      std::to_string(m));

    ScenarioConfig scenario;
    scenario.duration_s = config.duration_s;
    scenario.sample_rate = config.sample_rate;
    scenario.base_state = nominal_state(topo);
    scenario.load_walk_sigma = config.load_walk_sigma;
    scenario.mean_reversion = config.mean_reversion;
    scenario.events = config.events;

    const Trace benign = stage("simulate", [&] {
      Rng rng = root.child(1);
      return simulate(scenario, topo, h, noise, rng);
    });
    const TraceSplit split = stage("split", [&] {
      return split_trace(benign, config.train_fraction, config.val_fraction);
    });
    stage("simulate", [&] {
      save_trace(benign, (fs::path(config.out_dir) / "benign.trace").string());
      save_trace(split.train,
                 (fs::path(config.out_dir) / "train.trace").string());
      save_trace(split.val, (fs::path(config.out_dir) / "val.trace").string());
      save_trace(split.test,
                 (fs::path(config.out_dir) / "test.trace").string());
      return 0;
    });

    const bool combined = config.architecture.variant ==
                          DetectorArchitecture::Variant::Combined;
    const TrafficProfile profile = TrafficProfile::default_profile();
    FeatureSeries train_features;
    if (combined) {
      stage("features", [&] {
        Rng rng = root.child(2);
        train_features = synthesize_for_trace(split.train, profile, rng);
        save_features(train_features, split.train.timestamps,
                      (fs::path(config.out_dir) / "train.features").string());
        return 0;
      });
    }

    const DetectorModel model = stage("train", [&] {
      Rng rng = root.child(3);
      const TrainSample sample{&split.train,
                               combined ? &train_features : nullptr};
      return train_detector(config.architecture,
                            std::span<const TrainSample>(&sample, 1),
                            config.training, rng);
    });
    ExperimentResult result;
    result.checkpoint_path =
        (fs::path(config.out_dir) / "model.ckpt").string();
    model.save(result.checkpoint_path);

    const std::size_t window_n = config.architecture.window_len;
    for (std::size_t k : config.k_sweep) {
      // k = 0 means "nothing injected": the validation span stays benign and
      // calibration raises its single-class error.
      const bool no_attack = k == 0;
      const AttackSpec val_spec{
          RandomGaussianAttack{k, config.attack_sigma},
          central_window(split.val.size(), config.attack_fraction)};
      const AttackSpec test_spec{
          RandomGaussianAttack{k, config.attack_sigma},
          central_window(split.test.size(), config.attack_fraction)};

      const Trace val_k = stage("inject", [&] {
        if (no_attack) return split.val;
        Rng rng = root.child(100 + k);
        return inject(split.val, val_spec, h, rng);
      });
      const Trace test_k = stage("inject", [&] {
        if (no_attack) return split.test;
        Rng rng = root.child(300 + k);
        return inject(split.test, test_spec, h, rng);
      });

      FeatureSeries val_features, test_features;
      if (combined) {
        stage("features", [&] {
          Rng val_rng = root.child(200 + k);
          val_features = synthesize_for_trace(val_k, profile, val_rng);
          Rng test_rng = root.child(400 + k);
          test_features = synthesize_for_trace(test_k, profile, test_rng);
          return 0;
        });
      }

      const CalibrationResult calibration = stage("calibrate", [&] {
        return calibrate_tau(model, val_k,
                             combined ? &val_features : nullptr);
      });

      const std::vector<Verdict> verdicts = stage("detect", [&] {
        return detect_stream(model, calibration.tau, test_k,
                             combined ? &test_features : nullptr);
      });
      const std::span<const std::uint8_t> test_labels(
          test_k.labels.data() + window_n, test_k.size() - window_n);

      ExperimentRow row;
      row.k = k;
      row.capability = attacking_capability(k, m);
      row.tau = calibration.tau;
      row.dynamic_metrics = stage("evaluate", [&] {
        return evaluate(verdicts, test_labels);
      });

      if (config.with_static) {
        row.static_metrics = stage("evaluate", [&] {
          Metrics metrics;
          for (std::size_t t = window_n; t < test_k.size(); ++t) {
            const StaticVerdict verdict =
                static_detect(test_k.z[t], h, noise, config.alpha);
            const bool attacked = test_k.labels[t] != 0;
            if (verdict.is_bad && attacked) ++metrics.tp;
            if (verdict.is_bad && !attacked) ++metrics.fp;
            if (!verdict.is_bad && attacked) ++metrics.fn;
            if (!verdict.is_bad && !attacked) ++metrics.tn;
          }
          return metrics;
        });
      }

      stage("report", [&] {
        save_trace(test_k, (fs::path(config.out_dir) /
                            ("test_k" + std::to_string(k) + ".trace"))
                               .string());
        save_verdicts(verdicts,
                      std::vector<std::uint8_t>(test_labels.begin(),
                                                test_labels.end()),
                      (fs::path(config.out_dir) /
                       ("verdicts_k" + std::to_string(k) + ".csv"))
                          .string());
        return 0;
      });
      result.rows.push_back(row);
    }

    result.metrics_csv_path =
        (fs::path(config.out_dir) / "metrics.csv").string();
    stage("report", [&] {
      save_metrics_csv(result.rows, config.with_static,
                       result.metrics_csv_path);
      return 0;
    });
    return result;
  });
}

}  // namespace gridfdi
