// gridfdi: desk-scale lab for false-data-injection attacks on DC state
// estimation. Subcommands cover dataset generation, attack injection,
// detector training/calibration, streaming detection and the full bench
// pipeline; see README for the config schema.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "gridfdi/harness.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace gridfdi;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> variant;
  std::vector<std::size_t> k_sweep;
  bool with_static = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON experiment config");
  cmd->add_option("--seed", opts.seed, "seed override");
  cmd->add_option("--out", opts.out_dir, "output directory override");
  cmd->add_option("--k-sweep", opts.k_sweep,
                  "comma separated list of k values")
      ->delimiter(',');
  cmd->add_option("--variant", opts.variant,
                  "detector variant: dynamic or combined")
      ->check(CLI::IsMember({"dynamic", "combined"}));
  cmd->add_flag("--with-static", opts.with_static,
                "also run the chi-square static detector");
}

ExperimentConfig resolve_config(const CommonOptions& opts) {
  ExperimentConfig config;
  if (!opts.config_path.empty())
    config = load_experiment_config(opts.config_path);
  if (opts.seed) config.seed = *opts.seed;
  if (opts.out_dir) config.out_dir = *opts.out_dir;
  if (!opts.k_sweep.empty()) config.k_sweep = opts.k_sweep;
  if (opts.variant)
    config.architecture.variant =
        *opts.variant == "combined" ? DetectorArchitecture::Variant::Combined
                                    : DetectorArchitecture::Variant::DynamicOnly;
  if (opts.with_static) config.with_static = true;
  return config;
}

struct GridContext {
  GridTopology topo;
  MeasurementMatrix h;
  NoiseModel noise;
};

GridContext make_grid(const ExperimentConfig& config) {
  GridTopology topo = load_case39();
  MeasurementMatrix h =
      build_h_matrix(topo, MeasurementConfig::default_for(topo));
  NoiseModel noise = NoiseModel::uniform(h.m(), config.noise_sigma);
  return GridContext{std::move(topo), std::move(h), std::move(noise)};
}

ScenarioConfig make_scenario(const ExperimentConfig& config,
                             const GridTopology& topo) {
  ScenarioConfig scenario;
  scenario.duration_s = config.duration_s;
  scenario.sample_rate = config.sample_rate;
  scenario.base_state = nominal_state(topo);
  scenario.load_walk_sigma = config.load_walk_sigma;
  scenario.mean_reversion = config.mean_reversion;
  scenario.events = config.events;
  return scenario;
}

bool is_combined(const ExperimentConfig& config) {
  return config.architecture.variant ==
         DetectorArchitecture::Variant::Combined;
}

int cmd_simulate(const CommonOptions& opts) {
  const ExperimentConfig config = resolve_config(opts);
  const GridContext grid = make_grid(config);
  const Rng root(config.seed);
  Rng rng = root.child(1);
  const Trace trace =
      simulate(make_scenario(config, grid.topo), grid.topo, grid.h, grid.noise,
               rng);
  fs::create_directories(config.out_dir);
  const std::string trace_path =
      (fs::path(config.out_dir) / "benign.trace").string();
  save_trace(trace, trace_path);
  std::cout << "wrote " << trace_path << " (" << trace.size() << " samples)\n";
  if (is_combined(config)) {
    Rng feat_rng = root.child(2);
    const FeatureSeries features =
        synthesize_for_trace(trace, TrafficProfile::default_profile(), feat_rng);
    const std::string feat_path =
        (fs::path(config.out_dir) / "benign.features").string();
    save_features(features, trace.timestamps, feat_path);
    std::cout << "wrote " << feat_path << "\n";
  }
  return 0;
}

int cmd_attack(const CommonOptions& opts, const std::string& in_path,
               const std::string& kind, std::size_t k, double sigma,
               double c_scale, const std::string& replay_path,
               std::size_t offset, std::size_t window_begin,
               std::size_t window_end) {
  const ExperimentConfig config = resolve_config(opts);
  const GridContext grid = make_grid(config);
  const Trace trace = load_trace(in_path);
  const SampleWindow window{window_begin,
                            window_end == 0 ? trace.size() : window_end};

  AttackSpec spec;
  spec.window = window;
  TraceLibrary library;
  const Rng root(config.seed);
  Rng rng = root.child(10);
  if (kind == "random") {
    spec.kind = RandomGaussianAttack{k, sigma};
  } else if (kind == "stealthy") {
    StealthyAttack stealthy;
    stealthy.c = Eigen::VectorXd(grid.h.n_free());
    for (int i = 0; i < stealthy.c.size(); ++i)
      stealthy.c(i) = c_scale * rng.normal();
    spec.kind = std::move(stealthy);
  } else {  // replay
    if (replay_path.empty())
      throw ContractError("attack: --replay-trace is required for replay");
    library["recorded"] = load_trace(replay_path);
    spec.kind = ReplayEventAttack{"recorded", offset};
  }

  const Trace attacked = inject(trace, spec, grid.h, rng, library);
  fs::create_directories(config.out_dir);
  const std::string out_path =
      (fs::path(config.out_dir) / "attacked.trace").string();
  save_trace(attacked, out_path);
  std::cout << "wrote " << out_path << "\n";
  if (is_combined(config)) {
    Rng feat_rng = root.child(11);
    const FeatureSeries features = synthesize_for_trace(
        attacked, TrafficProfile::default_profile(), feat_rng);
    const std::string feat_path =
        (fs::path(config.out_dir) / "attacked.features").string();
    save_features(features, attacked.timestamps, feat_path);
    std::cout << "wrote " << feat_path << "\n";
  }
  return 0;
}

int cmd_train(const CommonOptions& opts, const std::vector<std::string>& ins,
              const std::vector<std::string>& feature_paths) {
  const ExperimentConfig config = resolve_config(opts);
  const bool combined = is_combined(config);
  if (combined && feature_paths.size() != ins.size())
    throw ContractError("train: one --features file per input trace");

  std::vector<Trace> traces;
  std::vector<FeatureSeries> features;
  for (std::size_t i = 0; i < ins.size(); ++i) {
    traces.push_back(load_trace(ins[i]));
    if (combined) features.push_back(load_features(feature_paths[i]));
  }
  std::vector<TrainSample> samples;
  for (std::size_t i = 0; i < traces.size(); ++i)
    samples.push_back(
        TrainSample{&traces[i], combined ? &features[i] : nullptr});

  Rng rng = Rng(config.seed).child(3);
  const DetectorModel model =
      train_detector(config.architecture, samples, config.training, rng);

  fs::create_directories(config.out_dir);
  const std::string ckpt =
      (fs::path(config.out_dir) / "model.ckpt").string();
  model.save(ckpt);
  const std::string losses =
      (fs::path(config.out_dir) / "losses.csv").string();
  std::ofstream loss_out(losses);
  loss_out << "epoch,loss\n";
  for (std::size_t e = 0; e < model.epoch_losses().size(); ++e)
    loss_out << e << ',' << model.epoch_losses()[e] << "\n";
  std::cout << "wrote " << ckpt << " and " << losses << "\n";
  return 0;
}

int cmd_calibrate(const CommonOptions& opts, const std::string& model_path,
                  const std::string& in_path, const std::string& feat_path) {
  const ExperimentConfig config = resolve_config(opts);
  const DetectorModel model = DetectorModel::load(model_path);
  const Trace val = load_trace(in_path);
  FeatureSeries features;
  const bool combined = is_combined(config);
  if (combined) features = load_features(feat_path);
  const CalibrationResult result =
      calibrate_tau(model, val, combined ? &features : nullptr);

  fs::create_directories(config.out_dir);
  nlohmann::json doc{{"tau", result.tau},
                     {"f1", result.f1},
                     {"degenerate", result.degenerate}};
  const std::string tau_path = (fs::path(config.out_dir) / "tau.json").string();
  std::ofstream out(tau_path);
  out << doc.dump(2) << "\n";
  std::cout << "tau " << result.tau << " (validation F1 " << result.f1
            << ")\nwrote " << tau_path << "\n";
  if (result.degenerate)
    std::cerr << "warning: validation scores were all identical; tau is the "
                 "grid maximum\n";
  return 0;
}

int cmd_detect(const CommonOptions& opts, const std::string& model_path,
               const std::string& in_path, const std::string& feat_path,
               double tau, const std::string& tau_file) {
  const ExperimentConfig config = resolve_config(opts);
  const DetectorModel model = DetectorModel::load(model_path);
  const Trace trace = load_trace(in_path);
  if (!tau_file.empty()) {
    std::ifstream tau_in(tau_file);
    if (!tau_in) throw LoadError(tau_file + ": cannot open tau file");
    nlohmann::json doc = nlohmann::json::parse(tau_in);
    tau = doc.at("tau").get<double>();
  }
  FeatureSeries features;
  const bool combined = is_combined(config);
  if (combined) features = load_features(feat_path);

  const auto verdicts =
      detect_stream(model, tau, trace, combined ? &features : nullptr);
  const std::size_t n = model.architecture().window_len;
  std::vector<std::uint8_t> labels(trace.labels.begin() + n,
                                   trace.labels.end());
  fs::create_directories(config.out_dir);
  const std::string out_path =
      (fs::path(config.out_dir) / "verdicts.csv").string();
  save_verdicts(verdicts, labels, out_path);

  std::size_t alarms = 0;
  for (const Verdict& v : verdicts) alarms += v.is_attack ? 1 : 0;
  std::cout << "wrote " << out_path << " (" << alarms << "/" << verdicts.size()
            << " samples flagged at tau " << tau << ")\n";
  return 0;
}

int cmd_bench(const CommonOptions& opts) {
  const ExperimentConfig config = resolve_config(opts);
  const ExperimentResult result = run_experiment(config);
  std::cout << "k,capability,accuracy,recall,f1\n";
  for (const ExperimentRow& row : result.rows)
    std::printf("%zu,%.4f,%.4f,%.4f,%.4f\n", row.k, row.capability,
                row.dynamic_metrics.accuracy(), row.dynamic_metrics.recall(),
                row.dynamic_metrics.f1());
  std::cout << "wrote " << result.metrics_csv_path << "\n";
  return 0;
}

int cmd_report(const std::string& in_path) {
  const auto rows = load_metrics_csv(in_path);
  if (rows.empty()) {
    std::cout << "no rows in " << in_path << "\n";
    return 0;
  }
  std::printf("%6s %10s %8s %9s %8s %8s\n", "k", "capability", "accuracy",
              "precision", "recall", "f1");
  for (const ExperimentRow& row : rows) {
    const Metrics& m = row.dynamic_metrics;
    std::printf("%6zu %10.3f %8.3f %9.3f %8.3f %8.3f\n", row.k, row.capability,
                m.accuracy(), m.precision(), m.recall(), m.f1());
    if (row.static_metrics) {
      const Metrics& s = *row.static_metrics;
      std::printf("%6s %10s %8.3f %9.3f %8.3f %8.3f   (static)\n", "", "",
                  s.accuracy(), s.precision(), s.recall(), s.f1());
    }
  }
  const auto& first = rows.front().dynamic_metrics;
  const auto& last = rows.back().dynamic_metrics;
  std::printf("accuracy trend: %.3f at k/n=%.3f -> %.3f at k/n=%.3f\n",
              first.accuracy(), rows.front().capability, last.accuracy(),
              rows.back().capability);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"false-data-injection attack lab on DC state estimation"};
  app.require_subcommand(1);

  CommonOptions opts;

  auto* simulate_cmd =
      app.add_subcommand("simulate", "generate a benign trace");
  add_common(simulate_cmd, opts);

  auto* attack_cmd =
      app.add_subcommand("attack", "inject an attack into a trace");
  add_common(attack_cmd, opts);
  std::string attack_in, attack_kind = "random", replay_path;
  std::size_t attack_k = 10, attack_offset = 0;
  std::size_t window_begin = 0, window_end = 0;
  double attack_sigma = 0.5, c_scale = 0.1;
  attack_cmd->add_option("--in", attack_in, "input trace")->required();
  attack_cmd->add_option("--kind", attack_kind, "random|stealthy|replay")
      ->check(CLI::IsMember({"random", "stealthy", "replay"}));
  attack_cmd->add_option("--k", attack_k, "meters compromised (random)");
  attack_cmd->add_option("--sigma", attack_sigma, "attack std-dev (random)");
  attack_cmd->add_option("--c-scale", c_scale,
                         "state perturbation scale (stealthy)");
  attack_cmd->add_option("--replay-trace", replay_path,
                         "recorded trace (replay)");
  attack_cmd->add_option("--offset", attack_offset,
                         "alignment offset (replay)");
  attack_cmd->add_option("--window-begin", window_begin, "window start sample");
  attack_cmd->add_option("--window-end", window_end,
                         "window end sample (0 = trace end)");

  auto* train_cmd = app.add_subcommand("train", "train the dynamic detector");
  add_common(train_cmd, opts);
  std::vector<std::string> train_ins, train_features;
  train_cmd->add_option("--in", train_ins, "benign training trace(s)")
      ->required();
  train_cmd->add_option("--features", train_features,
                        "aligned feature file(s), combined variant");

  auto* calibrate_cmd =
      app.add_subcommand("calibrate", "grid-search tau on a labeled trace");
  add_common(calibrate_cmd, opts);
  std::string cal_model, cal_in, cal_features;
  calibrate_cmd->add_option("--model", cal_model, "checkpoint")->required();
  calibrate_cmd->add_option("--in", cal_in, "labeled validation trace")
      ->required();
  calibrate_cmd->add_option("--features", cal_features,
                            "aligned features (combined)");

  auto* detect_cmd =
      app.add_subcommand("detect", "score a trace and emit verdicts");
  add_common(detect_cmd, opts);
  std::string det_model, det_in, det_features, det_tau_file;
  double det_tau = 0.0;
  detect_cmd->add_option("--model", det_model, "checkpoint")->required();
  detect_cmd->add_option("--in", det_in, "trace to score")->required();
  detect_cmd->add_option("--features", det_features,
                         "aligned features (combined)");
  detect_cmd->add_option("--tau", det_tau, "decision threshold");
  detect_cmd->add_option("--tau-file", det_tau_file,
                         "tau.json from calibrate");

  auto* bench_cmd = app.add_subcommand(
      "bench", "full pipeline: simulate, train, sweep k, report");
  add_common(bench_cmd, opts);

  auto* report_cmd =
      app.add_subcommand("report", "summarize a metrics.csv");
  std::string report_in;
  report_cmd->add_option("--in", report_in, "metrics.csv path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate_cmd->parsed()) return cmd_simulate(opts);
    if (attack_cmd->parsed())
      return cmd_attack(opts, attack_in, attack_kind, attack_k, attack_sigma,
                        c_scale, replay_path, attack_offset, window_begin,
                        window_end);
    if (train_cmd->parsed()) return cmd_train(opts, train_ins, train_features);
    if (calibrate_cmd->parsed())
      return cmd_calibrate(opts, cal_model, cal_in, cal_features);
    if (detect_cmd->parsed())
      return cmd_detect(opts, det_model, det_in, det_features, det_tau,
                        det_tau_file);
    if (bench_cmd->parsed()) return cmd_bench(opts);
    if (report_cmd->parsed()) return cmd_report(report_in);
  } catch (const StageError& e) {
    std::cerr << "error " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
