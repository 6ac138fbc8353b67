#include "gridfdi/netfeatures.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gridfdi/scenario.hpp"

namespace gridfdi {

namespace {

FeatureDef num(std::string name, FeatureCategory cat, double min, double max) {
  FeatureDef def;
  def.name = std::move(name);
  def.category = cat;
  def.kind = FeatureKind::Numeric;
  def.min = min;
  def.max = max;
  return def;
}

FeatureDef cat(std::string name, FeatureCategory category, int n_categories) {
  FeatureDef def;
  def.name = std::move(name);
  def.category = category;
  def.kind = FeatureKind::Categorical;
  def.n_categories = n_categories;
  def.min = 0.0;
  def.max = static_cast<double>(n_categories - 1);
  return def;
}

std::vector<FeatureDef> make_standard41() {
  using FC = FeatureCategory;
  std::vector<FeatureDef> defs;
  defs.reserve(kNumPacketFeatures);
  // basic connection features
  defs.push_back(num("duration", FC::Basic, 0, 3600));
  defs.push_back(cat("protocol_type", FC::Basic, 3));
  defs.push_back(cat("service", FC::Basic, 10));
  defs.push_back(cat("flag", FC::Basic, 5));
  defs.push_back(num("src_bytes", FC::Basic, 0, 100000));
  defs.push_back(num("dst_bytes", FC::Basic, 0, 100000));
  defs.push_back(cat("land", FC::Basic, 2));
  defs.push_back(num("wrong_fragment", FC::Basic, 0, 3));
  defs.push_back(num("urgent", FC::Basic, 0, 5));
  // content features
  defs.push_back(num("hot", FC::Content, 0, 30));
  defs.push_back(num("num_failed_logins", FC::Content, 0, 5));
  defs.push_back(cat("logged_in", FC::Content, 2));
  defs.push_back(num("num_compromised", FC::Content, 0, 10));
  defs.push_back(cat("root_shell", FC::Content, 2));
  defs.push_back(cat("su_attempted", FC::Content, 3));
  defs.push_back(num("num_root", FC::Content, 0, 10));
  defs.push_back(num("num_file_creations", FC::Content, 0, 20));
  defs.push_back(num("num_shells", FC::Content, 0, 5));
  defs.push_back(num("num_access_files", FC::Content, 0, 10));
  defs.push_back(num("num_outbound_cmds", FC::Content, 0, 1));
  defs.push_back(cat("is_host_login", FC::Content, 2));
  defs.push_back(cat("is_guest_login", FC::Content, 2));
  // traffic features, time-based
  defs.push_back(num("count", FC::Traffic, 0, 511));
  defs.push_back(num("srv_count", FC::Traffic, 0, 511));
  defs.push_back(num("serror_rate", FC::Traffic, 0, 1));
  defs.push_back(num("srv_serror_rate", FC::Traffic, 0, 1));
  defs.push_back(num("rerror_rate", FC::Traffic, 0, 1));
  defs.push_back(num("srv_rerror_rate", FC::Traffic, 0, 1));
  defs.push_back(num("same_srv_rate", FC::Traffic, 0, 1));
  defs.push_back(num("diff_srv_rate", FC::Traffic, 0, 1));
  defs.push_back(num("srv_diff_host_rate", FC::Traffic, 0, 1));
  // traffic features, destination-host based
  defs.push_back(num("dst_host_count", FC::Traffic, 0, 255));
  defs.push_back(num("dst_host_srv_count", FC::Traffic, 0, 255));
  defs.push_back(num("dst_host_same_srv_rate", FC::Traffic, 0, 1));
  defs.push_back(num("dst_host_diff_srv_rate", FC::Traffic, 0, 1));
  defs.push_back(num("dst_host_same_src_port_rate", FC::Traffic, 0, 1));
  defs.push_back(num("dst_host_srv_diff_host_rate", FC::Traffic, 0, 1));
  defs.push_back(num("dst_host_serror_rate", FC::Traffic, 0, 1));
  defs.push_back(num("dst_host_srv_serror_rate", FC::Traffic, 0, 1));
  defs.push_back(num("dst_host_rerror_rate", FC::Traffic, 0, 1));
  defs.push_back(num("dst_host_srv_rerror_rate", FC::Traffic, 0, 1));
  return defs;
}

}  // namespace

const FeatureSchema& FeatureSchema::standard41() {
  static const FeatureSchema schema(make_standard41());
  return schema;
}

int FeatureSchema::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (defs_[i].name == name) return i;
  throw ContractError("features: unknown feature name '" + name + "'");
}

namespace {

FeatureDistribution numeric_dist(double mean, double stddev) {
  FeatureDistribution d;
  d.mean = mean;
  d.stddev = stddev;
  return d;
}

FeatureDistribution categorical_dist(std::vector<double> weights) {
  FeatureDistribution d;
  d.weights = std::move(weights);
  return d;
}

}  // namespace

TrafficProfile TrafficProfile::default_profile() {
  const FeatureSchema& schema = FeatureSchema::standard41();
  TrafficProfile profile;
  auto set = [&](std::vector<FeatureDistribution>& side, const std::string& name,
                 FeatureDistribution dist) {
    side[schema.index_of(name)] = std::move(dist);
  };

  std::vector<FeatureDistribution> benign(kNumPacketFeatures);
  set(benign, "duration", numeric_dist(2.0, 5.0));
  set(benign, "protocol_type", categorical_dist({0.70, 0.25, 0.05}));
  set(benign, "service",
      categorical_dist({0.3, 0.2, 0.15, 0.1, 0.08, 0.06, 0.05, 0.03, 0.02,
                        0.01}));
  set(benign, "flag", categorical_dist({0.82, 0.08, 0.05, 0.03, 0.02}));
  set(benign, "src_bytes", numeric_dist(500.0, 300.0));
  set(benign, "dst_bytes", numeric_dist(800.0, 500.0));
  set(benign, "land", categorical_dist({0.999, 0.001}));
  set(benign, "wrong_fragment", numeric_dist(0.0, 0.1));
  set(benign, "urgent", numeric_dist(0.0, 0.05));
  set(benign, "hot", numeric_dist(0.2, 0.5));
  set(benign, "num_failed_logins", numeric_dist(0.05, 0.2));
  set(benign, "logged_in", categorical_dist({0.3, 0.7}));
  set(benign, "num_compromised", numeric_dist(0.0, 0.1));
  set(benign, "root_shell", categorical_dist({0.99, 0.01}));
  set(benign, "su_attempted", categorical_dist({0.98, 0.01, 0.01}));
  set(benign, "num_root", numeric_dist(0.0, 0.1));
  set(benign, "num_file_creations", numeric_dist(0.1, 0.3));
  set(benign, "num_shells", numeric_dist(0.0, 0.1));
  set(benign, "num_access_files", numeric_dist(0.05, 0.2));
  set(benign, "num_outbound_cmds", numeric_dist(0.0, 0.0));
  set(benign, "is_host_login", categorical_dist({0.999, 0.001}));
  set(benign, "is_guest_login", categorical_dist({0.97, 0.03}));
  set(benign, "count", numeric_dist(8.0, 6.0));
  set(benign, "srv_count", numeric_dist(6.0, 5.0));
  set(benign, "serror_rate", numeric_dist(0.03, 0.06));
  set(benign, "srv_serror_rate", numeric_dist(0.03, 0.06));
  set(benign, "rerror_rate", numeric_dist(0.05, 0.08));
  set(benign, "srv_rerror_rate", numeric_dist(0.05, 0.08));
  set(benign, "same_srv_rate", numeric_dist(0.85, 0.10));
  set(benign, "diff_srv_rate", numeric_dist(0.08, 0.08));
  set(benign, "srv_diff_host_rate", numeric_dist(0.10, 0.10));
  set(benign, "dst_host_count", numeric_dist(30.0, 20.0));
  set(benign, "dst_host_srv_count", numeric_dist(25.0, 18.0));
  set(benign, "dst_host_same_srv_rate", numeric_dist(0.80, 0.12));
  set(benign, "dst_host_diff_srv_rate", numeric_dist(0.07, 0.07));
  set(benign, "dst_host_same_src_port_rate", numeric_dist(0.12, 0.12));
  set(benign, "dst_host_srv_diff_host_rate", numeric_dist(0.05, 0.06));
  set(benign, "dst_host_serror_rate", numeric_dist(0.03, 0.06));
  set(benign, "dst_host_srv_serror_rate", numeric_dist(0.03, 0.06));
  set(benign, "dst_host_rerror_rate", numeric_dist(0.05, 0.07));
  set(benign, "dst_host_srv_rerror_rate", numeric_dist(0.05, 0.07));

  profile.attack = benign;  // man-in-the-middle mode: same except the shifts
  profile.benign = std::move(benign);
  for (int index : default_shifted_features()) {
    FeatureDistribution& d = profile.attack[index];
    d.mean += 2.0 * d.stddev;
  }
  return profile;
}

const std::vector<int>& TrafficProfile::default_shifted_features() {
  static const std::vector<int> indices = [] {
    const FeatureSchema& schema = FeatureSchema::standard41();
    return std::vector<int>{
        schema.index_of("count"),          schema.index_of("srv_count"),
        schema.index_of("serror_rate"),    schema.index_of("srv_serror_rate"),
        schema.index_of("dst_host_count"), schema.index_of("dst_host_serror_rate")};
  }();
  return indices;
}

Eigen::VectorXd encode_normalize(const Eigen::VectorXd& raw,
                                 const FeatureSchema& schema) {
  if (raw.size() != schema.size())
    throw ContractError("features: raw vector length " +
                        std::to_string(raw.size()) + " != " +
                        std::to_string(schema.size()));
  Eigen::VectorXd out(schema.size());
  for (int i = 0; i < schema.size(); ++i) {
    const FeatureDef& def = schema.def(i);
    const double v = raw(i);
    if (v < def.min || v > def.max)
      throw ContractError("features: raw value " + std::to_string(v) +
                          " out of range for feature " + std::to_string(i) +
                          " (" + def.name + ")");
    const double span = def.max - def.min;
    out(i) = span > 0.0 ? (v - def.min) / span : 0.0;
  }
  return out;
}

namespace {

double draw_raw(const FeatureDef& def, const FeatureDistribution& dist,
                Rng& rng) {
  if (def.kind == FeatureKind::Numeric) {
    const double v = dist.mean + dist.stddev * rng.normal();
    return std::clamp(v, def.min, def.max);
  }
  if (static_cast<int>(dist.weights.size()) != def.n_categories)
    throw ContractError("features: weight count for '" + def.name +
                        "' does not match its categories");
  // inverse-CDF draw over the category weights
  double u = rng.uniform();
  double total = 0.0;
  for (double w : dist.weights) {
    if (w < 0.0)
      throw ContractError("features: negative weight for '" + def.name + "'");
    total += w;
  }
  if (!(total > 0.0))
    throw ContractError("features: weights for '" + def.name + "' sum to 0");
  u *= total;
  double acc = 0.0;
  for (std::size_t c = 0; c < dist.weights.size(); ++c) {
    acc += dist.weights[c];
    if (u < acc) return static_cast<double>(c);
  }
  return static_cast<double>(dist.weights.size() - 1);
}

}  // namespace

FeatureSeries synthesize_features(std::size_t trace_len,
                                  std::size_t sample_rate,
                                  const std::vector<SampleWindow>& attack_windows,
                                  const TrafficProfile& profile, Rng& rng,
                                  std::size_t start_t) {
  if (sample_rate == 0)
    throw ContractError("features: sample rate must be positive");
  const FeatureSchema& schema = FeatureSchema::standard41();
  if (profile.benign.size() != static_cast<std::size_t>(schema.size()) ||
      profile.attack.size() != static_cast<std::size_t>(schema.size()))
    throw ContractError("features: profile must cover all 41 slots");
  for (const SampleWindow& w : attack_windows)
    if (w.end > start_t + trace_len || w.begin < start_t)
      throw ContractError("features: attack window outside the trace");

  const std::size_t window_samples = kTrafficWindowSeconds * sample_rate;
  auto attacked_sample = [&](std::size_t t) {
    for (const SampleWindow& w : attack_windows)
      if (w.contains(t)) return true;
    return false;
  };

  FeatureSeries series;
  series.reserve(trace_len);
  std::size_t current_window = SIZE_MAX;
  Eigen::VectorXd traffic_raw(schema.size());
  for (std::size_t i = 0; i < trace_len; ++i) {
    const std::size_t t = start_t + i;
    const std::size_t window_id = t / window_samples;
    if (window_id != current_window) {
      current_window = window_id;
      // Window mode: attack if any sample of the window is attacked.
      bool window_attacked = false;
      const std::size_t w_begin = window_id * window_samples;
      for (std::size_t s = w_begin; s < w_begin + window_samples; ++s)
        if (attacked_sample(s)) window_attacked = true;
      const auto& dists = window_attacked ? profile.attack : profile.benign;
      for (int f = 0; f < schema.size(); ++f)
        if (schema.is_traffic(f))
          traffic_raw(f) = draw_raw(schema.def(f), dists[f], rng);
    }
    const auto& dists = attacked_sample(t) ? profile.attack : profile.benign;
    Eigen::VectorXd raw(schema.size());
    for (int f = 0; f < schema.size(); ++f)
      raw(f) = schema.is_traffic(f) ? traffic_raw(f)
                                    : draw_raw(schema.def(f), dists[f], rng);
    PacketFeatureVector vec;
    vec.features = encode_normalize(raw, schema);
    vec.window_id = window_id;
    series.push_back(std::move(vec));
  }
  return series;
}

FeatureSeries synthesize_for_trace(const Trace& trace,
                                   const TrafficProfile& profile, Rng& rng) {
  if (trace.size() == 0) return {};
  const std::size_t start_t = trace.timestamps.front();
  // Rebuild attack windows from the label runs.
  std::vector<SampleWindow> windows;
  std::size_t i = 0;
  while (i < trace.size()) {
    if (trace.labels[i]) {
      std::size_t j = i;
      while (j < trace.size() && trace.labels[j]) ++j;
      windows.push_back(
          SampleWindow{trace.timestamps[i], trace.timestamps[j - 1] + 1});
      i = j;
    } else {
      ++i;
    }
  }
  return synthesize_features(trace.size(), trace.sample_rate, windows, profile,
                             rng, start_t);
}

void save_features(const FeatureSeries& series,
                   const std::vector<std::size_t>& timestamps,
                   const std::string& path) {
  if (series.size() != timestamps.size())
    throw ContractError("features: series/timestamps lengths differ");
  std::ofstream out(path);
  if (!out) throw LoadError(path + ": cannot open for writing");
  out << "gridfdi-features v1\n";
  out << "n_features " << kNumPacketFeatures << "\n";
  out << "samples " << series.size() << "\n";
  char buf[32];
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << timestamps[i] << ',' << series[i].window_id;
    for (int f = 0; f < series[i].features.size(); ++f) {
      auto [ptr, ec] =
          std::to_chars(buf, buf + sizeof(buf), series[i].features(f));
      out << ',' << std::string_view(buf, ptr - buf);
    }
    out << "\n";
  }
  if (!out) throw LoadError(path + ": write failed");
}

FeatureSeries load_features(const std::string& path,
                            std::vector<std::size_t>* timestamps) {
  std::ifstream in(path);
  if (!in) throw LoadError(path + ": cannot open features file");
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
  if (line != "gridfdi-features v1") fail("bad magic");
  next_line();
  int n_features = 0;
  {
    std::istringstream header(line);
    std::string key;
    if (!(header >> key >> n_features) || key != "n_features" ||
        n_features != kNumPacketFeatures)
      fail("expected 'n_features 41'");
  }
  next_line();
  std::size_t n_samples = 0;
  {
    std::istringstream header(line);
    std::string key;
    if (!(header >> key >> n_samples) || key != "samples")
      fail("expected 'samples <count>'");
  }

  FeatureSeries series;
  series.reserve(n_samples);
  if (timestamps) timestamps->clear();
  for (std::size_t i = 0; i < n_samples; ++i) {
    next_line();
    std::istringstream row(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(row, cell, ',')) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size())
        fail("bad numeric field '" + cell + "'");
      values.push_back(v);
    }
    if (values.size() != 2 + kNumPacketFeatures)
      fail("expected " + std::to_string(2 + kNumPacketFeatures) + " fields");
    if (timestamps) timestamps->push_back(static_cast<std::size_t>(values[0]));
    PacketFeatureVector vec;
    vec.window_id = static_cast<std::size_t>(values[1]);
    vec.features = Eigen::Map<const Eigen::VectorXd>(values.data() + 2,
                                                     kNumPacketFeatures);
    series.push_back(std::move(vec));
  }
  return series;
}

}  // namespace gridfdi
