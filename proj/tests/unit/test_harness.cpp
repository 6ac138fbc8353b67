#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gridfdi/harness.hpp"

using namespace gridfdi;

namespace {

std::vector<Verdict> verdicts_of(const std::vector<int>& flags) {
  std::vector<Verdict> verdicts(flags.size());
  for (std::size_t i = 0; i < flags.size(); ++i) {
    verdicts[i].t = i;
    verdicts[i].is_attack = flags[i] != 0;
  }
  return verdicts;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

ExperimentConfig tiny_config(const std::string& out_dir) {
  ExperimentConfig config;
  config.seed = 21;
  config.out_dir = out_dir;
  config.duration_s = 30.0;  // 300 samples
  config.architecture.num_recurrent_layers = 1;
  config.architecture.hidden_size = 4;
  config.architecture.window_len = 5;
  config.training.epochs = 1;
  config.k_sweep = {40};
  return config;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("evaluate counts a perfect detector as all-correct") {
  const std::vector<std::uint8_t> labels{0, 0, 1, 1, 0};
  const auto verdicts = verdicts_of({0, 0, 1, 1, 0});
  const Metrics m = evaluate(verdicts, labels);
  CHECK(m.accuracy() == 1.0);
  CHECK(m.f1() == 1.0);
  CHECK(m.tp == 2);
  CHECK(m.tn == 3);
}

TEST_CASE("evaluate counts an inverted detector as all-wrong") {
  const std::vector<std::uint8_t> labels{0, 0, 1, 1, 0};
  const auto verdicts = verdicts_of({1, 1, 0, 0, 1});
  const Metrics m = evaluate(verdicts, labels);
  CHECK(m.accuracy() == 0.0);
  CHECK(m.tp == 0);
  CHECK(m.tn == 0);
}

TEST_CASE("confusion arithmetic: tp=8 fp=2 fn=2 tn=88") {
  std::vector<std::uint8_t> labels;
  std::vector<int> flags;
  for (int i = 0; i < 8; ++i) { labels.push_back(1); flags.push_back(1); }
  for (int i = 0; i < 2; ++i) { labels.push_back(0); flags.push_back(1); }
  for (int i = 0; i < 2; ++i) { labels.push_back(1); flags.push_back(0); }
  for (int i = 0; i < 88; ++i) { labels.push_back(0); flags.push_back(0); }
  const Metrics m = evaluate(verdicts_of(flags), labels);
  CHECK(m.precision() == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(m.recall() == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(m.accuracy() == doctest::Approx(0.96).epsilon(1e-15));
}

TEST_CASE("f1 equals the harmonic mean whenever defined") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Metrics m;
    m.tp = rng.index(20) + 1;
    m.fp = rng.index(20);
    m.fn = rng.index(20);
    m.tn = rng.index(50);
    const double p = m.precision(), r = m.recall();
    CHECK(m.f1() == doctest::Approx(2.0 * p * r / (p + r)).epsilon(1e-12));
  }
}

TEST_CASE("evaluate rejects mismatched lengths") {
  const std::vector<std::uint8_t> labels{0, 1};
  CHECK_THROWS_AS(evaluate(verdicts_of({1}), labels), ContractError);
}

TEST_CASE("config files override only what they specify") {
  const auto dir = temp_dir("gridfdi_cfg");
  const auto path = dir / "config.json";
  {
    std::ofstream out(path);
    out << R"({
      "seed": 99,
      "scenario": {"duration_s": 12.5, "noise_sigma": 0.02},
      "attack": {"k_sweep": [3, 5], "sigma": 0.7},
      "detector": {"variant": "combined", "hidden": 8, "epochs": 2},
      "static": {"enabled": true, "alpha": 0.01}
    })";
  }
  const ExperimentConfig config = load_experiment_config(path.string());
  CHECK(config.seed == 99);
  CHECK(config.duration_s == 12.5);
  CHECK(config.noise_sigma == 0.02);
  CHECK(config.sample_rate == 10);  // default kept
  CHECK(config.k_sweep == std::vector<std::size_t>{3, 5});
  CHECK(config.attack_sigma == 0.7);
  CHECK(config.architecture.variant == DetectorArchitecture::Variant::Combined);
  CHECK(config.architecture.hidden_size == 8);
  CHECK(config.architecture.num_recurrent_layers == 3);  // default kept
  CHECK(config.training.epochs == 2);
  CHECK(config.with_static);
  CHECK(config.alpha == 0.01);
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed configs raise LoadError") {
  const auto dir = temp_dir("gridfdi_badcfg");
  const auto path = dir / "bad.json";
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_experiment_config(path.string()), LoadError);
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"),
                  LoadError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("invalid configs are rejected up front") {
  ExperimentConfig config;
  config.train_fraction = 0.9;
  config.val_fraction = 0.2;
  CHECK_THROWS_AS(config.validate(), ContractError);
  config = ExperimentConfig{};
  config.attack_fraction = 0.0;
  CHECK_THROWS_AS(config.validate(), ContractError);
}

TEST_CASE("nominal case39 state balances generation against load") {
  const GridTopology topo = load_case39();
  const StateVector state = nominal_state(topo);
  const auto injections = bus_injections_of(topo, state);
  // 9 non-reference generators at 1 p.u.
  for (int g = 30; g <= 39; ++g)
    if (g != topo.reference_bus())
      CHECK(injections.at(g) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(injections.at(1) == doctest::Approx(-9.0 / 29.0).epsilon(1e-8));
}

TEST_CASE("metrics CSV round-trips") {
  std::vector<ExperimentRow> rows(2);
  rows[0].k = 8;
  rows[0].capability = 8.0 / 85.0;
  rows[0].tau = 1.25;
  rows[0].dynamic_metrics = Metrics{10, 2, 80, 8};
  rows[1].k = 40;
  rows[1].capability = 40.0 / 85.0;
  rows[1].tau = 2.5;
  rows[1].dynamic_metrics = Metrics{18, 1, 81, 0};
  rows[1].static_metrics = Metrics{1, 5, 77, 17};

  const auto dir = temp_dir("gridfdi_metrics");
  const auto path = (dir / "metrics.csv").string();
  save_metrics_csv(rows, true, path);
  const auto loaded = load_metrics_csv(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].k == 8);
  CHECK(loaded[0].dynamic_metrics.tp == 10);
  CHECK(loaded[1].static_metrics.has_value());
  CHECK(loaded[1].static_metrics->fn == 17);
  std::filesystem::remove_all(dir);
}

TEST_CASE("a k = 0 sweep surfaces the single-class calibration error") {
  const auto dir = temp_dir("gridfdi_k0");
  ExperimentConfig config = tiny_config(dir.string());
  config.k_sweep = {0};
  try {
    run_experiment(config);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "calibrate");
    CHECK(std::string(e.what()).find("single-class") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("tiny experiment produces sane artifacts and deterministic CSVs") {
  const auto dir_a = temp_dir("gridfdi_exp_a");
  const auto dir_b = temp_dir("gridfdi_exp_b");
  ExperimentConfig config = tiny_config(dir_a.string());
  const ExperimentResult result_a = run_experiment(config);
  config.out_dir = dir_b.string();
  const ExperimentResult result_b = run_experiment(config);

  REQUIRE(result_a.rows.size() == 1);
  CHECK(result_a.rows[0].k == 40);
  CHECK(result_a.rows[0].capability ==
        doctest::Approx(40.0 / 85.0).epsilon(1e-12));
  const Metrics& m = result_a.rows[0].dynamic_metrics;
  CHECK(m.total() == 60 - 5);  // test span minus warmup window

  for (const char* artifact :
       {"benign.trace", "train.trace", "val.trace", "test.trace",
        "model.ckpt", "metrics.csv", "verdicts_k40.csv", "test_k40.trace"})
    CHECK(std::filesystem::exists(dir_a / artifact));

  // byte-identical metrics across reruns with the same seed
  std::ifstream fa(result_a.metrics_csv_path, std::ios::binary);
  std::ifstream fb(result_b.metrics_csv_path, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(fa)),
                            std::istreambuf_iterator<char>());
  const std::string bytes_b((std::istreambuf_iterator<char>(fb)),
                            std::istreambuf_iterator<char>());
  CHECK(bytes_a == bytes_b);
  CHECK(!bytes_a.empty());
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

}  // TEST_SUITE
