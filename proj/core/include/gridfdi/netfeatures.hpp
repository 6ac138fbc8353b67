#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gridfdi/attack.hpp"
#include "gridfdi/rng.hpp"

namespace gridfdi {

struct Trace;

inline constexpr int kNumPacketFeatures = 41;
inline constexpr std::size_t kTrafficWindowSeconds = 2;

enum class FeatureCategory { Basic, Content, Traffic };
enum class FeatureKind { Numeric, Categorical };

struct FeatureDef {
  std::string name;
  FeatureCategory category = FeatureCategory::Basic;
  FeatureKind kind = FeatureKind::Numeric;
  double min = 0.0;      // numeric declared range
  double max = 1.0;
  int n_categories = 0;  // categorical
};

/// The fixed 41-slot connection-feature layout (basic, content and
/// traffic-based categories). Traffic-based entries are constant within each
/// 2-second window.
class FeatureSchema {
 public:
  static const FeatureSchema& standard41();

  const std::vector<FeatureDef>& defs() const noexcept { return defs_; }
  const FeatureDef& def(int index) const { return defs_.at(index); }
  int size() const noexcept { return static_cast<int>(defs_.size()); }
  int index_of(const std::string& name) const;
  bool is_traffic(int index) const {
    return defs_.at(index).category == FeatureCategory::Traffic;
  }

 private:
  explicit FeatureSchema(std::vector<FeatureDef> defs)
      : defs_(std::move(defs)) {}
  std::vector<FeatureDef> defs_;
};

/// Distribution parameters for one feature in one traffic mode. Numeric
/// features draw mean + std * N(0,1) clamped to the declared range;
/// categorical features draw an index from the weights.
struct FeatureDistribution {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> weights;  // categorical only, must sum to ~1
};

/// Benign and man-in-the-middle generation profiles over the 41 slots.
struct TrafficProfile {
  std::vector<FeatureDistribution> benign;
  std::vector<FeatureDistribution> attack;

  /// Benign baseline plus an attack mode that shifts six traffic features
  /// (connection counts and error rates) by +2 benign standard deviations.
  static TrafficProfile default_profile();

  /// Indices of the features the default attack mode shifts; the first is
  /// the designated separating feature.
  static const std::vector<int>& default_shifted_features();
};

/// One normalized 41-feature vector aligned with a measurement sample.
struct PacketFeatureVector {
  Eigen::VectorXd features;  // length 41, entries in [0, 1]
  std::size_t window_id = 0;
};

using FeatureSeries = std::vector<PacketFeatureVector>;

/// Min-max normalize a raw feature vector (categorical entries hold their
/// category index). Throws ContractError naming the offending index on
/// out-of-range input.
Eigen::VectorXd encode_normalize(const Eigen::VectorXd& raw,
                                 const FeatureSchema& schema);

/// One feature vector per sample for timestamps start_t .. start_t+len-1.
/// Traffic-based slots are drawn once per 2-second window (attack mode if the
/// window overlaps any attack window); basic/content slots are drawn per
/// sample (attack mode inside attack windows).
FeatureSeries synthesize_features(std::size_t trace_len,
                                  std::size_t sample_rate,
                                  const std::vector<SampleWindow>& attack_windows,
                                  const TrafficProfile& profile, Rng& rng,
                                  std::size_t start_t = 0);

/// synthesize_features aligned with a trace: timestamps from the trace,
/// attack windows reconstructed from its labels.
FeatureSeries synthesize_for_trace(const Trace& trace,
                                   const TrafficProfile& profile, Rng& rng);

/// Row-per-sample file with the same indexing as the trace file it
/// accompanies; documented column order t,window_id,f0..f40.
void save_features(const FeatureSeries& series,
                   const std::vector<std::size_t>& timestamps,
                   const std::string& path);
FeatureSeries load_features(const std::string& path,
                            std::vector<std::size_t>* timestamps = nullptr);

}  // namespace gridfdi
