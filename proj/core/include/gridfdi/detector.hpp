#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridfdi/netfeatures.hpp"
#include "gridfdi/neural.hpp"
#include "gridfdi/scenario.hpp"

namespace gridfdi {

/// Shape of the dynamic detector: a stack of bidirectional LSTM layers with a
/// dense prediction head, optionally fed by per-source convolutional
/// equalizer branches (Combined).
struct DetectorArchitecture {
  enum class Variant { DynamicOnly, Combined };

  Variant variant = Variant::DynamicOnly;
  std::size_t num_recurrent_layers = 3;
  std::size_t hidden_size = 64;  // per direction
  std::size_t window_len = 20;   // n: history samples per prediction
  std::size_t conv_channels = 32;
  std::size_t conv_kernel_width = 3;

  void validate() const;
};

struct TrainSample;
struct TrainingOptions;
class DetectorModel;

DetectorModel train_detector(const DetectorArchitecture& architecture,
                             std::span<const TrainSample> data,
                             const TrainingOptions& options, Rng& rng);

/// Next-measurement predictor over sliding windows. Trained on benign data
/// only; large prediction residuals flag attacks.
class DetectorModel {
 public:
  DetectorModel() = default;

  /// Fresh model with randomly initialized parameters.
  static DetectorModel create(const DetectorArchitecture& architecture,
                              std::size_t meas_dim, Rng& rng);

  const DetectorArchitecture& architecture() const noexcept { return arch_; }
  std::size_t meas_dim() const noexcept { return meas_dim_; }
  bool trained() const noexcept { return trained_; }
  void mark_trained() noexcept { trained_ = true; }
  const std::vector<double>& epoch_losses() const noexcept {
    return epoch_losses_;
  }

  /// Predicted z(t) from the previous window_len samples (plus the aligned
  /// feature vectors for the Combined variant). Throws ContractError on an
  /// untrained model or a wrong-length window.
  MeasurementVector predict_next(
      std::span<const MeasurementVector> window,
      std::span<const PacketFeatureVector> features = {}) const;

  std::vector<neural::ParamRef> collect_params();

  void save(const std::string& path) const;
  static DetectorModel load(const std::string& path);

 private:
  friend DetectorModel train_detector(const DetectorArchitecture& architecture,
                                      std::span<const TrainSample> data,
                                      const TrainingOptions& options, Rng& rng);

  struct Forward;  // per-call caches, defined in detector.cpp
  neural::Tensor run_forward(std::span<const MeasurementVector> window,
                             std::span<const PacketFeatureVector> features,
                             Forward* caches) const;

  DetectorArchitecture arch_;
  std::size_t meas_dim_ = 0;
  std::size_t feat_dim_ = 0;
  // per-meter standardization fitted on the training data
  neural::Tensor meas_mean_;
  neural::Tensor meas_scale_;
  neural::Conv1dParams conv_meas_;
  neural::Conv1dParams conv_feat_;
  std::vector<neural::BiLstmLayerParams> layers_;
  neural::DenseParams head_;
  bool trained_ = false;
  std::vector<double> epoch_losses_;
};

/// One training sequence; features may be null for DynamicOnly.
struct TrainSample {
  const Trace* trace = nullptr;
  const FeatureSeries* features = nullptr;
};

/// train_detector minimizes mean squared next-step prediction error over
/// sliding windows with Adam. Training data must be benign (all labels
/// false); the per-epoch loss curve is recorded on the returned model.
struct TrainingOptions {
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
};

/// L2 norm of (actual - predicted).
double score(const MeasurementVector& actual,
             const MeasurementVector& predicted);

/// Per-step decision for one sample.
struct Verdict {
  std::size_t t = 0;
  double score = 0.0;
  double tau = 0.0;
  bool is_attack = false;
};

struct CalibrationResult {
  double tau = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // all validation scores identical
};

/// Grid-search tau over a 64-point geometric grid spanning the validation
/// scores, maximizing F1 (attack = positive); ties break toward larger tau.
/// Throws CalibrationError if the validation labels are single-class.
CalibrationResult calibrate_tau(const DetectorModel& model, const Trace& val,
                                const FeatureSeries* features = nullptr);

/// The grid-search core of calibrate_tau over precomputed scores.
CalibrationResult calibrate_tau_from_scores(
    std::span<const double> scores, std::span<const std::uint8_t> labels);

/// One Verdict per sample from index window_len onward; each verdict uses
/// only samples at or before its own time.
std::vector<Verdict> detect_stream(const DetectorModel& model, double tau,
                                   const Trace& trace,
                                   const FeatureSeries* features = nullptr);

/// CSV export: t,score,tau,is_attack,label.
void save_verdicts(const std::vector<Verdict>& verdicts,
                   const std::vector<std::uint8_t>& labels,
                   const std::string& path);

}  // namespace gridfdi
