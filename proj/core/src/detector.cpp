#include "gridfdi/detector.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace gridfdi {

using neural::BiLstmCache;
using neural::Tensor;

void DetectorArchitecture::validate() const {
  if (num_recurrent_layers < 1)
    throw ContractError("architecture: needs at least one recurrent layer");
  if (window_len < 1) throw ContractError("architecture: window_len must be >= 1");
  if (hidden_size < 1) throw ContractError("architecture: hidden_size must be >= 1");
  if (variant == Variant::Combined) {
    if (conv_channels < 1 || conv_kernel_width < 1)
      throw ContractError("architecture: conv branch sizes must be >= 1");
  }
}

DetectorModel DetectorModel::create(const DetectorArchitecture& architecture,
                                    std::size_t meas_dim, Rng& rng) {
  architecture.validate();
  if (meas_dim == 0) throw ContractError("detector: meas_dim must be > 0");

  DetectorModel model;
  model.arch_ = architecture;
  model.meas_dim_ = meas_dim;
  model.meas_mean_ = Tensor({meas_dim});
  model.meas_scale_ = Tensor({meas_dim});
  model.meas_scale_.fill(1.0);

  std::size_t seq_dim = meas_dim;
  if (architecture.variant == DetectorArchitecture::Variant::Combined) {
    model.feat_dim_ = kNumPacketFeatures;
    // Equalizer branches: same-length convolutions with matching output
    // channel counts so the two sources concatenate per step.
    const std::size_t pad = (architecture.conv_kernel_width - 1) / 2;
    model.conv_meas_.init(meas_dim, architecture.conv_channels,
                          architecture.conv_kernel_width, 1, pad, rng);
    model.conv_feat_.init(model.feat_dim_, architecture.conv_channels,
                          architecture.conv_kernel_width, 1, pad, rng);
    seq_dim = 2 * architecture.conv_channels;
  }

  model.layers_.resize(architecture.num_recurrent_layers);
  std::size_t input_dim = seq_dim;
  for (auto& layer : model.layers_) {
    layer.init(input_dim, architecture.hidden_size, rng);
    input_dim = 2 * architecture.hidden_size;
  }
  model.head_.init(2 * architecture.hidden_size, meas_dim, rng);
  return model;
}

std::vector<neural::ParamRef> DetectorModel::collect_params() {
  std::vector<neural::ParamRef> params;
  if (arch_.variant == DetectorArchitecture::Variant::Combined) {
    conv_meas_.collect("conv_meas", params);
    conv_feat_.collect("conv_feat", params);
  }
  for (std::size_t l = 0; l < layers_.size(); ++l)
    layers_[l].collect("bilstm" + std::to_string(l), params);
  head_.collect("head", params);
  return params;
}

struct DetectorModel::Forward {
  Tensor meas_channels;  // [m, n], standardized, Combined only
  Tensor feat_channels;  // [41, n]
  Tensor first_input;    // [n, seq_dim]
  std::vector<BiLstmCache> layer_caches;
  Tensor last_output;  // [n, 2H]
  Tensor head_input;   // [2H]
};

Tensor DetectorModel::run_forward(std::span<const MeasurementVector> window,
                                  std::span<const PacketFeatureVector> features,
                                  Forward* fw) const {
  const std::size_t n = arch_.window_len;
  if (window.size() != n)
    throw ContractError("detector: window length " +
                        std::to_string(window.size()) + " != configured " +
                        std::to_string(n));
  const bool combined =
      arch_.variant == DetectorArchitecture::Variant::Combined;
  if (combined && features.size() != n)
    throw ContractError("detector: combined variant needs " +
                        std::to_string(n) + " aligned feature vectors");

  Tensor standardized({n, meas_dim_});
  for (std::size_t t = 0; t < n; ++t) {
    if (static_cast<std::size_t>(window[t].size()) != meas_dim_)
      throw ContractError("detector: measurement dimension mismatch");
    for (std::size_t i = 0; i < meas_dim_; ++i)
      standardized(t, i) = (window[t](i) - meas_mean_[i]) * meas_scale_[i];
  }

  Tensor seq;
  if (!combined) {
    seq = std::move(standardized);
  } else {
    Tensor meas_channels({meas_dim_, n});
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t i = 0; i < meas_dim_; ++i)
        meas_channels(i, t) = standardized(t, i);
    Tensor feat_channels({feat_dim_, n});
    for (std::size_t t = 0; t < n; ++t) {
      if (static_cast<std::size_t>(features[t].features.size()) != feat_dim_)
        throw ContractError("detector: feature dimension mismatch");
      for (std::size_t i = 0; i < feat_dim_; ++i)
        feat_channels(i, t) = features[t].features(i);
    }
    const Tensor meas_eq = neural::conv1d_forward(conv_meas_, meas_channels);
    const Tensor feat_eq = neural::conv1d_forward(conv_feat_, feat_channels);
    // Both branches emit conv_channels x n; concatenate per step.
    const std::size_t channels = arch_.conv_channels;
    seq = Tensor({n, 2 * channels});
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t ch = 0; ch < channels; ++ch) {
        seq(t, ch) = meas_eq(ch, t);
        seq(t, channels + ch) = feat_eq(ch, t);
      }
    if (fw) {
      fw->meas_channels = std::move(meas_channels);
      fw->feat_channels = std::move(feat_channels);
    }
  }

  if (fw) {
    fw->first_input = seq;
    fw->layer_caches.resize(layers_.size());
  }
  std::vector<BiLstmCache> local_caches(fw ? 0 : layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    BiLstmCache& cache = fw ? fw->layer_caches[l] : local_caches[l];
    seq = neural::bilstm_forward(layers_[l], seq, cache);
  }

  Tensor head_input({2 * arch_.hidden_size});
  for (std::size_t j = 0; j < head_input.size(); ++j)
    head_input[j] = seq(n - 1, j);
  if (fw) {
    fw->last_output = std::move(seq);
    fw->head_input = head_input;
  }
  return neural::dense_forward(head_, head_input);
}

MeasurementVector DetectorModel::predict_next(
    std::span<const MeasurementVector> window,
    std::span<const PacketFeatureVector> features) const {
  if (!trained_)
    throw ContractError("detector: model is untrained; call train first");
  const Tensor y = run_forward(window, features, nullptr);
  MeasurementVector z(meas_dim_);
  for (std::size_t i = 0; i < meas_dim_; ++i)
    z(static_cast<Eigen::Index>(i)) = y[i] / meas_scale_[i] + meas_mean_[i];
  return z;
}

double score(const MeasurementVector& actual,
             const MeasurementVector& predicted) {
  if (actual.size() != predicted.size())
    throw ContractError("score: vector lengths differ");
  return (actual - predicted).norm();
}

namespace {

/// Windows are stride-1 slices [t - n, t) predicting sample t.
struct WindowIter {
  const Trace* trace;
  const FeatureSeries* features;
};

}  // namespace

DetectorModel train_detector(const DetectorArchitecture& architecture,
                             std::span<const TrainSample> data,
                             const TrainingOptions& options, Rng& rng) {
  architecture.validate();
  if (data.empty()) throw ContractError("train: no training traces");
  const bool combined =
      architecture.variant == DetectorArchitecture::Variant::Combined;

  std::size_t meas_dim = 0;
  std::size_t total_samples = 0;
  for (const TrainSample& sample : data) {
    if (!sample.trace || sample.trace->size() <= architecture.window_len)
      throw ContractError("train: trace missing or shorter than window");
    for (std::uint8_t label : sample.trace->labels)
      if (label)
        throw ContractError("train: training data must be benign (label-free)");
    const std::size_t m = sample.trace->z.front().size();
    if (meas_dim == 0) meas_dim = m;
    if (m != meas_dim)
      throw ContractError("train: measurement dimensions differ across traces");
    if (combined &&
        (!sample.features || sample.features->size() != sample.trace->size()))
      throw ContractError("train: combined variant needs aligned features");
    total_samples += sample.trace->size();
  }

  DetectorModel model = DetectorModel::create(architecture, meas_dim, rng);

  // Per-meter standardization over the pooled training samples.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(meas_dim);
  for (const TrainSample& sample : data)
    for (const MeasurementVector& z : sample.trace->z) mean += z;
  mean /= static_cast<double>(total_samples);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(meas_dim);
  for (const TrainSample& sample : data)
    for (const MeasurementVector& z : sample.trace->z)
      var += (z - mean).cwiseAbs2();
  var /= static_cast<double>(total_samples);
  for (std::size_t i = 0; i < meas_dim; ++i) {
    model.meas_mean_[i] = mean(static_cast<Eigen::Index>(i));
    const double stddev = std::sqrt(var(static_cast<Eigen::Index>(i)));
    model.meas_scale_[i] = 1.0 / std::max(stddev, 1e-8);
  }

  const auto params = model.collect_params();
  neural::AdamState adam(
      neural::AdamConfig{.lr = options.learning_rate});
  const std::size_t n = architecture.window_len;
  const std::size_t hidden2 = 2 * architecture.hidden_size;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t windows = 0;
    for (const TrainSample& sample : data) {
      const Trace& trace = *sample.trace;
      for (std::size_t t = n; t < trace.size(); ++t) {
        DetectorModel::Forward fw;
        const std::span<const MeasurementVector> window(trace.z.data() + t - n,
                                                        n);
        std::span<const PacketFeatureVector> feats;
        if (combined)
          feats = std::span<const PacketFeatureVector>(
              sample.features->data() + t - n, n);
        const Tensor prediction = model.run_forward(window, feats, &fw);

        Tensor target({meas_dim});
        for (std::size_t i = 0; i < meas_dim; ++i)
          target[i] = (trace.z[t](static_cast<Eigen::Index>(i)) -
                       model.meas_mean_[i]) *
                      model.meas_scale_[i];

        Tensor dpred;
        const double loss = neural::mse_loss(prediction, target, &dpred);
        if (!std::isfinite(loss))
          throw TrainingError("train: non-finite loss at epoch " +
                              std::to_string(epoch) + ", window " +
                              std::to_string(t));
        loss_sum += loss;
        ++windows;

        neural::zero_grads(params);
        Tensor dhead_input;
        neural::dense_backward(model.head_, fw.head_input, dpred, dhead_input);
        Tensor dstack({n, hidden2});
        for (std::size_t j = 0; j < hidden2; ++j)
          dstack(n - 1, j) = dhead_input[j];
        for (std::size_t l = model.layers_.size(); l-- > 0;)
          dstack = neural::bilstm_backward(model.layers_[l],
                                           fw.layer_caches[l], dstack);
        if (combined) {
          const std::size_t channels = architecture.conv_channels;
          Tensor dmeas_eq({channels, n}), dfeat_eq({channels, n});
          for (std::size_t t2 = 0; t2 < n; ++t2)
            for (std::size_t ch = 0; ch < channels; ++ch) {
              dmeas_eq(ch, t2) = dstack(t2, ch);
              dfeat_eq(ch, t2) = dstack(t2, channels + ch);
            }
          neural::conv1d_backward(model.conv_meas_, fw.meas_channels,
                                  dmeas_eq);
          neural::conv1d_backward(model.conv_feat_, fw.feat_channels,
                                  dfeat_eq);
        }
        adam.step(params);
      }
    }
    model.epoch_losses_.push_back(loss_sum / static_cast<double>(windows));
  }

  model.trained_ = true;
  return model;
}

CalibrationResult calibrate_tau_from_scores(
    std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw CalibrationError("calibrate: score/label lengths differ or empty");
  bool any_attack = false, any_benign = false;
  for (std::uint8_t label : labels) (label ? any_attack : any_benign) = true;
  if (!any_attack || !any_benign)
    throw CalibrationError(
        "calibrate: validation labels are single-class; need both benign and "
        "attacked spans");

  const double lo_score = *std::min_element(scores.begin(), scores.end());
  const double hi_score = *std::max_element(scores.begin(), scores.end());

  auto f1_at = [&](double tau) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool flagged = scores[i] > tau;
      if (flagged && labels[i]) ++tp;
      if (flagged && !labels[i]) ++fp;
      if (!flagged && labels[i]) ++fn;
    }
    const double denom = 2.0 * tp + fp + fn;
    return denom > 0.0 ? 2.0 * tp / denom : 0.0;
  };

  if (hi_score <= lo_score)
    return CalibrationResult{hi_score, f1_at(hi_score), true};

  const double lo = std::max(lo_score, hi_score * 1e-12);
  constexpr int kGridPoints = 64;
  CalibrationResult best{lo, -1.0, false};
  for (int j = 0; j < kGridPoints; ++j) {
    const double tau =
        lo * std::pow(hi_score / lo,
                      static_cast<double>(j) / (kGridPoints - 1));
    const double f1 = f1_at(tau);
    if (f1 >= best.f1) {  // >= keeps the largest tau among ties
      best.tau = tau;
      best.f1 = f1;
    }
  }
  return best;
}

CalibrationResult calibrate_tau(const DetectorModel& model, const Trace& val,
                                const FeatureSeries* features) {
  const std::size_t n = model.architecture().window_len;
  if (val.size() <= n)
    throw CalibrationError("calibrate: validation trace shorter than window");

  const auto verdicts = detect_stream(model, 0.0, val, features);
  std::vector<double> scores(verdicts.size());
  std::vector<std::uint8_t> labels(verdicts.size());
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    scores[i] = verdicts[i].score;
    labels[i] = val.labels[n + i];
  }
  return calibrate_tau_from_scores(scores, labels);
}

std::vector<Verdict> detect_stream(const DetectorModel& model, double tau,
                                   const Trace& trace,
                                   const FeatureSeries* features) {
  const std::size_t n = model.architecture().window_len;
  if (trace.size() <= n)
    throw ContractError("detect: trace must be longer than the window");
  const bool combined = model.architecture().variant ==
                        DetectorArchitecture::Variant::Combined;
  if (combined && (!features || features->size() != trace.size()))
    throw ContractError("detect: combined variant needs aligned features");

  std::vector<Verdict> verdicts;
  verdicts.reserve(trace.size() - n);
  for (std::size_t t = n; t < trace.size(); ++t) {
    const std::span<const MeasurementVector> window(trace.z.data() + t - n, n);
    std::span<const PacketFeatureVector> feats;
    if (combined)
      feats = std::span<const PacketFeatureVector>(features->data() + t - n, n);
    const MeasurementVector predicted = model.predict_next(window, feats);
    Verdict v;
    v.t = trace.timestamps[t];
    v.score = score(trace.z[t], predicted);
    v.tau = tau;
    v.is_attack = v.score > tau;
    verdicts.push_back(v);
  }
  return verdicts;
}

void save_verdicts(const std::vector<Verdict>& verdicts,
                   const std::vector<std::uint8_t>& labels,
                   const std::string& path) {
  if (verdicts.size() != labels.size())
    throw ContractError("verdicts: label count mismatch");
  std::ofstream out(path);
  if (!out) throw LoadError(path + ": cannot open for writing");
  out << "t,score,tau,is_attack,label\n";
  char buf[32];
  auto emit = [&](double v) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out << std::string_view(buf, ptr - buf);
  };
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    out << verdicts[i].t << ',';
    emit(verdicts[i].score);
    out << ',';
    emit(verdicts[i].tau);
    out << ',' << (verdicts[i].is_attack ? 1 : 0) << ',' << int(labels[i])
        << "\n";
  }
}

// ---------------------------------------------------------------------------
// Checkpoint

void DetectorModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw LoadError(path + ": cannot open for writing");
  const bool combined =
      arch_.variant == DetectorArchitecture::Variant::Combined;
  out << "gridfdi-checkpoint v1\n";
  out << "variant " << (combined ? "combined" : "dynamic") << "\n";
  out << "layers " << arch_.num_recurrent_layers << "\n";
  out << "hidden " << arch_.hidden_size << "\n";
  out << "window " << arch_.window_len << "\n";
  out << "conv_channels " << arch_.conv_channels << "\n";
  out << "conv_kernel " << arch_.conv_kernel_width << "\n";
  out << "meas_dim " << meas_dim_ << "\n";
  out << "trained " << (trained_ ? 1 : 0) << "\n";
  out << "epoch_losses " << epoch_losses_.size();
  char buf[32];
  for (double loss : epoch_losses_) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), loss);
    out << ' ' << std::string_view(buf, ptr - buf);
  }
  out << "\n";

  neural::write_tensor(out, "standardize.mean", meas_mean_);
  neural::write_tensor(out, "standardize.scale", meas_scale_);
  auto params = const_cast<DetectorModel*>(this)->collect_params();
  out << "tensors " << params.size() << "\n";
  for (const auto& ref : params)
    neural::write_tensor(out, ref.name, ref.param->value);
  if (!out) throw LoadError(path + ": write failed");
}

DetectorModel DetectorModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path + ": cannot open checkpoint");
  std::string line;
  if (!std::getline(in, line) || line != "gridfdi-checkpoint v1")
    throw LoadError(path + ": bad checkpoint magic");

  DetectorArchitecture arch;
  std::size_t meas_dim = 0;
  bool trained = false;
  std::vector<double> losses;
  for (int i = 0; i < 9; ++i) {
    if (!std::getline(in, line))
      throw LoadError(path + ": truncated checkpoint header");
    std::istringstream header(line);
    std::string key;
    header >> key;
    if (key == "variant") {
      std::string variant;
      header >> variant;
      if (variant == "combined")
        arch.variant = DetectorArchitecture::Variant::Combined;
      else if (variant == "dynamic")
        arch.variant = DetectorArchitecture::Variant::DynamicOnly;
      else
        throw LoadError(path + ": unknown variant '" + variant + "'");
    } else if (key == "layers") {
      header >> arch.num_recurrent_layers;
    } else if (key == "hidden") {
      header >> arch.hidden_size;
    } else if (key == "window") {
      header >> arch.window_len;
    } else if (key == "conv_channels") {
      header >> arch.conv_channels;
    } else if (key == "conv_kernel") {
      header >> arch.conv_kernel_width;
    } else if (key == "meas_dim") {
      header >> meas_dim;
    } else if (key == "trained") {
      int flag = 0;
      header >> flag;
      trained = flag != 0;
    } else if (key == "epoch_losses") {
      std::size_t count = 0;
      header >> count;
      losses.resize(count);
      for (std::size_t j = 0; j < count; ++j) header >> losses[j];
    } else {
      throw LoadError(path + ": unknown checkpoint key '" + key + "'");
    }
    if (header.fail())
      throw LoadError(path + ": bad checkpoint value for '" + key + "'");
  }

  Rng scratch(0);  // shapes only; every tensor is overwritten below
  DetectorModel model = create(arch, meas_dim, scratch);
  model.trained_ = trained;
  model.epoch_losses_ = std::move(losses);

  std::string name;
  Tensor mean = neural::read_tensor(in, name);
  if (name != "standardize.mean")
    throw LoadError(path + ": expected standardize.mean");
  Tensor scale = neural::read_tensor(in, name);
  if (name != "standardize.scale")
    throw LoadError(path + ": expected standardize.scale");
  model.meas_mean_ = std::move(mean);
  model.meas_scale_ = std::move(scale);

  if (!std::getline(in, line))
    throw LoadError(path + ": missing tensor count");
  std::istringstream counter(line);
  std::string key;
  std::size_t n_tensors = 0;
  if (!(counter >> key >> n_tensors) || key != "tensors")
    throw LoadError(path + ": expected 'tensors <count>'");

  auto params = model.collect_params();
  if (n_tensors != params.size())
    throw LoadError(path + ": tensor count does not match architecture");
  std::map<std::string, neural::Param*> by_name;
  for (auto& ref : params) by_name[ref.name] = ref.param;
  for (std::size_t i = 0; i < n_tensors; ++i) {
    Tensor t = neural::read_tensor(in, name);
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw LoadError(path + ": unexpected tensor '" + name + "'");
    if (!(t.shape() == it->second->value.shape()))
      throw LoadError(path + ": tensor '" + name + "' has wrong shape");
    it->second->value = std::move(t);
  }
  return model;
}

}  // namespace gridfdi
