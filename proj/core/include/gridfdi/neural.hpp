#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "gridfdi/errors.hpp"
#include "gridfdi/rng.hpp"

namespace gridfdi::neural {

/// Dense row-major value container, 64-bit floats throughout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}
  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_))
      throw ContractError("tensor: data length does not match shape");
  }

  static Tensor zeros(std::vector<std::size_t> shape) {
    return Tensor(std::move(shape));
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t i) { return data_[i]; }
  double operator()(std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = shape.empty() ? 0 : 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// A trainable tensor with its gradient accumulator.
struct Param {
  Tensor value;
  Tensor grad;

  void resize(std::vector<std::size_t> shape) {
    value = Tensor(shape);
    grad = Tensor(std::move(shape));
  }
};

/// Named handle used by the optimizer and the checkpoint writer.
struct ParamRef {
  std::string name;
  Param* param = nullptr;
};

void zero_grads(const std::vector<ParamRef>& params);

/// Uniform init in +-1/sqrt(fan_in).
void init_uniform(Tensor& t, std::size_t fan_in, Rng& rng);

// ---------------------------------------------------------------------------
// LSTM cell

/// Gate parameters of one LSTM cell: per-gate input weights W (hidden x
/// input), recurrent weights U (hidden x hidden) and biases b.
struct LstmCellParams {
  Param w_f, w_i, w_o, w_c;
  Param u_f, u_i, u_o, u_c;
  Param b_f, b_i, b_o, b_c;

  std::size_t hidden_size() const { return b_f.value.dim(0); }
  std::size_t input_size() const { return w_f.value.dim(1); }

  /// Forget-gate bias starts at 1, everything else uniform +-1/sqrt(fan_in).
  void init(std::size_t input, std::size_t hidden, Rng& rng);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

/// Everything the backward pass needs from one forward step.
struct LstmStepCache {
  Tensor x, h_prev, c_prev;
  Tensor f, i, o, g;  // gate activations and candidate
  Tensor c, tanh_c, h;
};

/// One step: f/i/o logistic gates, tanh candidate and state update,
/// h = o * tanh(c).
LstmStepCache lstm_cell_step(const LstmCellParams& params, const Tensor& x,
                             const Tensor& h_prev, const Tensor& c_prev);

/// Exact gradients for one step. dh/dc are the upstream gradients w.r.t. h_t
/// and c_t; parameter gradients accumulate into params.
void lstm_cell_backward(LstmCellParams& params, const LstmStepCache& cache,
                        const Tensor& dh, const Tensor& dc, Tensor& dx,
                        Tensor& dh_prev, Tensor& dc_prev);

struct LstmSequenceCache {
  std::vector<LstmStepCache> steps;
};

/// Run a cell across a [T, d] sequence from zero initial state; returns the
/// [T, hidden] outputs.
Tensor lstm_forward(const LstmCellParams& params, const Tensor& sequence,
                    LstmSequenceCache& cache);

/// Backpropagation through time; returns the [T, d] input gradient.
Tensor lstm_backward(LstmCellParams& params, const LstmSequenceCache& cache,
                     const Tensor& dout);

// ---------------------------------------------------------------------------
// Bidirectional layer

/// Two cells over the same input, one per direction, outputs concatenated
/// per step to [T, 2*hidden].
struct BiLstmLayerParams {
  LstmCellParams forward_cell;
  LstmCellParams backward_cell;

  std::size_t hidden_size() const { return forward_cell.hidden_size(); }
  std::size_t input_size() const { return forward_cell.input_size(); }
  void init(std::size_t input, std::size_t hidden, Rng& rng);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct BiLstmCache {
  LstmSequenceCache forward;
  LstmSequenceCache backward;  // over the reversed sequence
};

Tensor bilstm_forward(const BiLstmLayerParams& params, const Tensor& sequence,
                      BiLstmCache& cache);
Tensor bilstm_backward(BiLstmLayerParams& params, const BiLstmCache& cache,
                       const Tensor& dout);

// ---------------------------------------------------------------------------
// 1-D convolution and pooling

struct Conv1dParams {
  Param kernels;  // [out_channels, in_channels, kernel_width]
  Param bias;     // [out_channels]
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const { return kernels.value.dim(0); }
  std::size_t in_channels() const { return kernels.value.dim(1); }
  std::size_t kernel_width() const { return kernels.value.dim(2); }
  std::size_t out_len(std::size_t in_len) const;

  void init(std::size_t in_ch, std::size_t out_ch, std::size_t width,
            std::size_t stride_, std::size_t padding_, Rng& rng);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

/// Cross-correlation with bias over a [C_in, L] input -> [C_out, L'].
Tensor conv1d_forward(const Conv1dParams& params, const Tensor& input);
/// Returns the input gradient; parameter gradients accumulate into params.
Tensor conv1d_backward(Conv1dParams& params, const Tensor& input,
                       const Tensor& dout);

struct MaxPool1dConfig {
  std::size_t width = 2;
  std::size_t stride = 2;
};

/// Max pool over a [C, L] input; argmax keeps the winning input position per
/// output cell for the backward scatter.
Tensor maxpool1d_forward(const MaxPool1dConfig& config, const Tensor& input,
                         Tensor& argmax);
Tensor maxpool1d_backward(const MaxPool1dConfig& config, const Tensor& argmax,
                          const Tensor& dout,
                          const std::vector<std::size_t>& input_shape);

// ---------------------------------------------------------------------------
// Dense layer and loss

struct DenseParams {
  Param w;  // [out, in]
  Param b;  // [out]

  std::size_t out_size() const { return b.value.dim(0); }
  std::size_t in_size() const { return w.value.dim(1); }
  void init(std::size_t in, std::size_t out, Rng& rng);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

Tensor dense_forward(const DenseParams& params, const Tensor& x);
void dense_backward(DenseParams& params, const Tensor& x, const Tensor& dout,
                    Tensor& dx);

/// Mean squared error over all elements; writes dL/dpred when requested.
double mse_loss(const Tensor& pred, const Tensor& target,
                Tensor* dpred = nullptr);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list. Moment accumulators are
/// allocated on first use and keyed by position, so the list must be stable
/// across steps.
class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  /// Applies one update from the accumulated gradients. Throws TrainingError
  /// naming the parameter block on a non-finite gradient.
  void step(const std::vector<ParamRef>& params);

  std::size_t step_count() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
  std::size_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint primitives (text, bit-exact round-trip)

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t);
/// Reads "tensor <name> <rank> <dims...>" + one line of values.
Tensor read_tensor(std::istream& in, std::string& name);

}  // namespace gridfdi::neural
