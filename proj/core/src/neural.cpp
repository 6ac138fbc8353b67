#include "gridfdi/neural.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace gridfdi::neural {

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void zero_grads(const std::vector<ParamRef>& params) {
  for (const ParamRef& ref : params) ref.param->grad.fill(0.0);
}

void init_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = bound * (2.0 * rng.uniform() - 1.0);
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_vector(const Tensor& t, std::size_t len, const char* what) {
  if (t.rank() != 1 || t.dim(0) != len)
    throw ContractError(std::string("neural: ") + what +
                        " has wrong shape, expected length " +
                        std::to_string(len));
}

/// y += W x for W [rows, cols], x [cols], y [rows].
void matvec_add(const Tensor& w, const Tensor& x, Tensor& y) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  const double* wp = w.data();
  const double* xp = x.data();
  double* yp = y.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = wp + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * xp[c];
    yp[r] += acc;
  }
}

/// dx += W' dy.
void matvec_transpose_add(const Tensor& w, const Tensor& dy, Tensor& dx) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  const double* wp = w.data();
  const double* dyp = dy.data();
  double* dxp = dx.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = wp + r * cols;
    const double d = dyp[r];
    for (std::size_t c = 0; c < cols; ++c) dxp[c] += row[c] * d;
  }
}

/// gw += dy x'.
void outer_add(Tensor& gw, const Tensor& dy, const Tensor& x) {
  const std::size_t rows = gw.dim(0), cols = gw.dim(1);
  double* gp = gw.data();
  const double* dyp = dy.data();
  const double* xp = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = gp + r * cols;
    const double d = dyp[r];
    for (std::size_t c = 0; c < cols; ++c) row[c] += d * xp[c];
  }
}

Tensor row_of(const Tensor& matrix, std::size_t r) {
  const std::size_t cols = matrix.dim(1);
  Tensor row({cols});
  for (std::size_t c = 0; c < cols; ++c) row[c] = matrix(r, c);
  return row;
}

}  // namespace

// ---------------------------------------------------------------------------
// LSTM cell

void LstmCellParams::init(std::size_t input, std::size_t hidden, Rng& rng) {
  for (Param* w : {&w_f, &w_i, &w_o, &w_c}) {
    w->resize({hidden, input});
    init_uniform(w->value, input, rng);
  }
  for (Param* u : {&u_f, &u_i, &u_o, &u_c}) {
    u->resize({hidden, hidden});
    init_uniform(u->value, hidden, rng);
  }
  for (Param* b : {&b_f, &b_i, &b_o, &b_c}) b->resize({hidden});
  b_f.value.fill(1.0);  // open forget gates at the start of training
}

void LstmCellParams::collect(const std::string& prefix,
                             std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w_f", &w_f});
  out.push_back({prefix + ".w_i", &w_i});
  out.push_back({prefix + ".w_o", &w_o});
  out.push_back({prefix + ".w_c", &w_c});
  out.push_back({prefix + ".u_f", &u_f});
  out.push_back({prefix + ".u_i", &u_i});
  out.push_back({prefix + ".u_o", &u_o});
  out.push_back({prefix + ".u_c", &u_c});
  out.push_back({prefix + ".b_f", &b_f});
  out.push_back({prefix + ".b_i", &b_i});
  out.push_back({prefix + ".b_o", &b_o});
  out.push_back({prefix + ".b_c", &b_c});
}

LstmStepCache lstm_cell_step(const LstmCellParams& params, const Tensor& x,
                             const Tensor& h_prev, const Tensor& c_prev) {
  const std::size_t hidden = params.hidden_size();
  check_vector(x, params.input_size(), "lstm input");
  check_vector(h_prev, hidden, "lstm h_prev");
  check_vector(c_prev, hidden, "lstm c_prev");

  LstmStepCache cache;
  cache.x = x;
  cache.h_prev = h_prev;
  cache.c_prev = c_prev;

  auto preactivation = [&](const Param& w, const Param& u, const Param& b) {
    Tensor pre = b.value;
    matvec_add(w.value, x, pre);
    matvec_add(u.value, h_prev, pre);
    return pre;
  };

  cache.f = preactivation(params.w_f, params.u_f, params.b_f);
  cache.i = preactivation(params.w_i, params.u_i, params.b_i);
  cache.o = preactivation(params.w_o, params.u_o, params.b_o);
  cache.g = preactivation(params.w_c, params.u_c, params.b_c);
  cache.c = Tensor({hidden});
  cache.tanh_c = Tensor({hidden});
  cache.h = Tensor({hidden});
  for (std::size_t j = 0; j < hidden; ++j) {
    cache.f[j] = sigmoid(cache.f[j]);
    cache.i[j] = sigmoid(cache.i[j]);
    cache.o[j] = sigmoid(cache.o[j]);
    cache.g[j] = std::tanh(cache.g[j]);
    cache.c[j] = cache.f[j] * c_prev[j] + cache.i[j] * cache.g[j];
    cache.tanh_c[j] = std::tanh(cache.c[j]);
    cache.h[j] = cache.o[j] * cache.tanh_c[j];
  }
  return cache;
}

void lstm_cell_backward(LstmCellParams& params, const LstmStepCache& cache,
                        const Tensor& dh, const Tensor& dc, Tensor& dx,
                        Tensor& dh_prev, Tensor& dc_prev) {
  const std::size_t hidden = params.hidden_size();
  const std::size_t input = params.input_size();
  if (cache.h.empty()) throw ContractError("neural: missing forward cache");
  check_vector(dh, hidden, "lstm dh");
  check_vector(dc, hidden, "lstm dc");

  Tensor dpre_f({hidden}), dpre_i({hidden}), dpre_o({hidden}),
      dpre_g({hidden});
  dc_prev = Tensor({hidden});
  for (std::size_t j = 0; j < hidden; ++j) {
    const double dtotal_c =
        dc[j] + dh[j] * cache.o[j] * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]);
    const double do_ = dh[j] * cache.tanh_c[j];
    dpre_o[j] = do_ * cache.o[j] * (1.0 - cache.o[j]);
    dpre_f[j] = dtotal_c * cache.c_prev[j] * cache.f[j] * (1.0 - cache.f[j]);
    dpre_i[j] = dtotal_c * cache.g[j] * cache.i[j] * (1.0 - cache.i[j]);
    dpre_g[j] = dtotal_c * cache.i[j] * (1.0 - cache.g[j] * cache.g[j]);
    dc_prev[j] = dtotal_c * cache.f[j];
  }

  dx = Tensor({input});
  dh_prev = Tensor({hidden});
  struct GateRefs {
    Param* w;
    Param* u;
    Param* b;
    const Tensor* dpre;
  };
  const GateRefs gates[] = {{&params.w_f, &params.u_f, &params.b_f, &dpre_f},
                            {&params.w_i, &params.u_i, &params.b_i, &dpre_i},
                            {&params.w_o, &params.u_o, &params.b_o, &dpre_o},
                            {&params.w_c, &params.u_c, &params.b_c, &dpre_g}};
  for (const GateRefs& gate : gates) {
    matvec_transpose_add(gate.w->value, *gate.dpre, dx);
    matvec_transpose_add(gate.u->value, *gate.dpre, dh_prev);
    outer_add(gate.w->grad, *gate.dpre, cache.x);
    outer_add(gate.u->grad, *gate.dpre, cache.h_prev);
    for (std::size_t j = 0; j < hidden; ++j) gate.b->grad[j] += (*gate.dpre)[j];
  }
}

Tensor lstm_forward(const LstmCellParams& params, const Tensor& sequence,
                    LstmSequenceCache& cache) {
  if (sequence.rank() != 2 || sequence.dim(0) == 0)
    throw ContractError("neural: lstm needs a nonempty [T, d] sequence");
  const std::size_t T = sequence.dim(0);
  const std::size_t hidden = params.hidden_size();

  cache.steps.clear();
  cache.steps.reserve(T);
  Tensor h({hidden}), c({hidden});
  Tensor out({T, hidden});
  for (std::size_t t = 0; t < T; ++t) {
    cache.steps.push_back(
        lstm_cell_step(params, row_of(sequence, t), h, c));
    h = cache.steps.back().h;
    c = cache.steps.back().c;
    for (std::size_t j = 0; j < hidden; ++j) out(t, j) = h[j];
  }
  return out;
}

Tensor lstm_backward(LstmCellParams& params, const LstmSequenceCache& cache,
                     const Tensor& dout) {
  const std::size_t T = cache.steps.size();
  if (T == 0) throw ContractError("neural: missing forward cache");
  const std::size_t hidden = params.hidden_size();
  const std::size_t input = params.input_size();
  if (dout.rank() != 2 || dout.dim(0) != T || dout.dim(1) != hidden)
    throw ContractError("neural: lstm dout shape mismatch");

  Tensor dseq({T, input});
  Tensor dh({hidden}), dc({hidden});
  for (std::size_t step = T; step-- > 0;) {
    Tensor dh_total = dh;
    for (std::size_t j = 0; j < hidden; ++j) dh_total[j] += dout(step, j);
    Tensor dx, dh_prev, dc_prev;
    lstm_cell_backward(params, cache.steps[step], dh_total, dc, dx, dh_prev,
                       dc_prev);
    for (std::size_t j = 0; j < input; ++j) dseq(step, j) = dx[j];
    dh = std::move(dh_prev);
    dc = std::move(dc_prev);
  }
  return dseq;
}

// ---------------------------------------------------------------------------
// Bidirectional layer

void BiLstmLayerParams::init(std::size_t input, std::size_t hidden, Rng& rng) {
  forward_cell.init(input, hidden, rng);
  backward_cell.init(input, hidden, rng);
}

void BiLstmLayerParams::collect(const std::string& prefix,
                                std::vector<ParamRef>& out) {
  forward_cell.collect(prefix + ".fwd", out);
  backward_cell.collect(prefix + ".bwd", out);
}

namespace {

Tensor reverse_rows(const Tensor& matrix) {
  const std::size_t rows = matrix.dim(0), cols = matrix.dim(1);
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out(r, c) = matrix(rows - 1 - r, c);
  return out;
}

}  // namespace

Tensor bilstm_forward(const BiLstmLayerParams& params, const Tensor& sequence,
                      BiLstmCache& cache) {
  const Tensor fwd_out = lstm_forward(params.forward_cell, sequence,
                                      cache.forward);
  const Tensor bwd_out = lstm_forward(params.backward_cell,
                                      reverse_rows(sequence), cache.backward);
  const std::size_t T = sequence.dim(0);
  const std::size_t hidden = params.hidden_size();
  Tensor out({T, 2 * hidden});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < hidden; ++j) {
      out(t, j) = fwd_out(t, j);
      out(t, hidden + j) = bwd_out(T - 1 - t, j);
    }
  return out;
}

Tensor bilstm_backward(BiLstmLayerParams& params, const BiLstmCache& cache,
                       const Tensor& dout) {
  const std::size_t T = cache.forward.steps.size();
  const std::size_t hidden = params.hidden_size();
  if (dout.rank() != 2 || dout.dim(0) != T || dout.dim(1) != 2 * hidden)
    throw ContractError("neural: bilstm dout shape mismatch");

  Tensor dfwd({T, hidden}), dbwd({T, hidden});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < hidden; ++j) {
      dfwd(t, j) = dout(t, j);
      dbwd(T - 1 - t, j) = dout(t, hidden + j);
    }
  const Tensor dseq_fwd =
      lstm_backward(params.forward_cell, cache.forward, dfwd);
  const Tensor dseq_bwd_rev =
      lstm_backward(params.backward_cell, cache.backward, dbwd);

  const std::size_t input = params.input_size();
  Tensor dseq({T, input});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < input; ++j)
      dseq(t, j) = dseq_fwd(t, j) + dseq_bwd_rev(T - 1 - t, j);
  return dseq;
}

// ---------------------------------------------------------------------------
// 1-D convolution

std::size_t Conv1dParams::out_len(std::size_t in_len) const {
  const std::size_t padded = in_len + 2 * padding;
  if (padded < kernel_width())
    throw ContractError("conv1d: input length " + std::to_string(in_len) +
                        " (+padding) shorter than kernel width " +
                        std::to_string(kernel_width()));
  return (padded - kernel_width()) / stride + 1;
}

void Conv1dParams::init(std::size_t in_ch, std::size_t out_ch,
                        std::size_t width, std::size_t stride_,
                        std::size_t padding_, Rng& rng) {
  if (width < 1 || stride_ < 1)
    throw ContractError("conv1d: kernel width and stride must be >= 1");
  kernels.resize({out_ch, in_ch, width});
  bias.resize({out_ch});
  init_uniform(kernels.value, in_ch * width, rng);
  stride = stride_;
  padding = padding_;
}

void Conv1dParams::collect(const std::string& prefix,
                           std::vector<ParamRef>& out) {
  out.push_back({prefix + ".kernels", &kernels});
  out.push_back({prefix + ".bias", &bias});
}

Tensor conv1d_forward(const Conv1dParams& params, const Tensor& input) {
  if (input.rank() != 2 || input.dim(0) != params.in_channels())
    throw ContractError("conv1d: input must be [in_channels, L]");
  const std::size_t in_len = input.dim(1);
  const std::size_t out_len = params.out_len(in_len);
  const std::size_t width = params.kernel_width();

  Tensor out({params.out_channels(), out_len});
  for (std::size_t oc = 0; oc < params.out_channels(); ++oc)
    for (std::size_t l = 0; l < out_len; ++l) {
      double acc = params.bias.value[oc];
      for (std::size_t ic = 0; ic < params.in_channels(); ++ic)
        for (std::size_t k = 0; k < width; ++k) {
          const std::ptrdiff_t p =
              static_cast<std::ptrdiff_t>(l * params.stride + k) -
              static_cast<std::ptrdiff_t>(params.padding);
          if (p >= 0 && p < static_cast<std::ptrdiff_t>(in_len))
            acc += params.kernels.value(oc, ic, k) * input(ic, p);
        }
      out(oc, l) = acc;
    }
  return out;
}

Tensor conv1d_backward(Conv1dParams& params, const Tensor& input,
                       const Tensor& dout) {
  const std::size_t in_len = input.dim(1);
  const std::size_t out_len = params.out_len(in_len);
  if (dout.rank() != 2 || dout.dim(0) != params.out_channels() ||
      dout.dim(1) != out_len)
    throw ContractError("conv1d: dout shape mismatch");

  Tensor din({params.in_channels(), in_len});
  const std::size_t width = params.kernel_width();
  for (std::size_t oc = 0; oc < params.out_channels(); ++oc)
    for (std::size_t l = 0; l < out_len; ++l) {
      const double d = dout(oc, l);
      params.bias.grad[oc] += d;
      for (std::size_t ic = 0; ic < params.in_channels(); ++ic)
        for (std::size_t k = 0; k < width; ++k) {
          const std::ptrdiff_t p =
              static_cast<std::ptrdiff_t>(l * params.stride + k) -
              static_cast<std::ptrdiff_t>(params.padding);
          if (p >= 0 && p < static_cast<std::ptrdiff_t>(in_len)) {
            params.kernels.grad(oc, ic, k) += d * input(ic, p);
            din(ic, p) += d * params.kernels.value(oc, ic, k);
          }
        }
    }
  return din;
}

Tensor maxpool1d_forward(const MaxPool1dConfig& config, const Tensor& input,
                         Tensor& argmax) {
  if (input.rank() != 2) throw ContractError("maxpool: input must be [C, L]");
  if (config.width < 1 || config.stride < 1)
    throw ContractError("maxpool: width and stride must be >= 1");
  const std::size_t channels = input.dim(0), in_len = input.dim(1);
  if (in_len < config.width)
    throw ContractError("maxpool: input shorter than pool width");
  const std::size_t out_len = (in_len - config.width) / config.stride + 1;

  Tensor out({channels, out_len});
  argmax = Tensor({channels, out_len});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t l = 0; l < out_len; ++l) {
      std::size_t best = l * config.stride;
      for (std::size_t k = 1; k < config.width; ++k) {
        const std::size_t p = l * config.stride + k;
        if (input(c, p) > input(c, best)) best = p;
      }
      out(c, l) = input(c, best);
      argmax(c, l) = static_cast<double>(best);
    }
  return out;
}

Tensor maxpool1d_backward(const MaxPool1dConfig& config, const Tensor& argmax,
                          const Tensor& dout,
                          const std::vector<std::size_t>& input_shape) {
  (void)config;
  Tensor din(input_shape);
  for (std::size_t c = 0; c < dout.dim(0); ++c)
    for (std::size_t l = 0; l < dout.dim(1); ++l)
      din(c, static_cast<std::size_t>(argmax(c, l))) += dout(c, l);
  return din;
}

// ---------------------------------------------------------------------------
// Dense layer and loss

void DenseParams::init(std::size_t in, std::size_t out, Rng& rng) {
  w.resize({out, in});
  b.resize({out});
  init_uniform(w.value, in, rng);
}

void DenseParams::collect(const std::string& prefix,
                          std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w", &w});
  out.push_back({prefix + ".b", &b});
}

Tensor dense_forward(const DenseParams& params, const Tensor& x) {
  check_vector(x, params.in_size(), "dense input");
  Tensor y = params.b.value;
  matvec_add(params.w.value, x, y);
  return y;
}

void dense_backward(DenseParams& params, const Tensor& x, const Tensor& dout,
                    Tensor& dx) {
  check_vector(dout, params.out_size(), "dense dout");
  dx = Tensor({params.in_size()});
  matvec_transpose_add(params.w.value, dout, dx);
  outer_add(params.w.grad, dout, x);
  for (std::size_t j = 0; j < params.out_size(); ++j)
    params.b.grad[j] += dout[j];
}

double mse_loss(const Tensor& pred, const Tensor& target, Tensor* dpred) {
  if (!pred.same_shape(target))
    throw ContractError("mse: prediction/target shapes differ");
  const std::size_t n = pred.size();
  if (n == 0) throw ContractError("mse: empty tensors");
  double loss = 0.0;
  if (dpred) *dpred = Tensor(pred.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = pred[i] - target[i];
    loss += diff * diff;
    if (dpred) (*dpred)[i] = 2.0 * diff / static_cast<double>(n);
  }
  return loss / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Adam

void AdamState::step(const std::vector<ParamRef>& params) {
  if (first_moment_.empty()) {
    for (const ParamRef& ref : params) {
      first_moment_.emplace_back(ref.param->value.shape());
      second_moment_.emplace_back(ref.param->value.shape());
    }
  }
  if (first_moment_.size() != params.size())
    throw ContractError("adam: parameter list changed between steps");

  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& value = params[p].param->value;
    const Tensor& grad = params[p].param->grad;
    if (!grad.all_finite())
      throw TrainingError("adam: non-finite gradient in parameter block '" +
                          params[p].name + "'");
    Tensor& m = first_moment_[p];
    Tensor& v = second_moment_[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      value[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoint primitives

void write_tensor(std::ostream& out, const std::string& name,
                  const Tensor& t) {
  out << "tensor " << name << ' ' << t.rank();
  for (std::size_t d : t.shape()) out << ' ' << d;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), t[i]);
    if (i) out << ' ';
    out << std::string_view(buf, ptr - buf);
  }
  out << '\n';
}

Tensor read_tensor(std::istream& in, std::string& name) {
  std::string line;
  if (!std::getline(in, line))
    throw LoadError("checkpoint: unexpected end of file");
  std::istringstream header(line);
  std::string keyword;
  std::size_t rank = 0;
  if (!(header >> keyword >> name >> rank) || keyword != "tensor")
    throw LoadError("checkpoint: expected 'tensor <name> <rank> <dims...>'");
  std::vector<std::size_t> shape(rank);
  for (std::size_t i = 0; i < rank; ++i)
    if (!(header >> shape[i]))
      throw LoadError("checkpoint: bad tensor dimensions for '" + name + "'");

  Tensor t(shape);
  if (!std::getline(in, line))
    throw LoadError("checkpoint: missing values for '" + name + "'");
  const char* ptr = line.data();
  const char* end = ptr + line.size();
  for (std::size_t i = 0; i < t.size(); ++i) {
    while (ptr < end && *ptr == ' ') ++ptr;
    double v = 0.0;
    auto [next, ec] = std::from_chars(ptr, end, v);
    if (ec != std::errc())
      throw LoadError("checkpoint: bad value in tensor '" + name + "'");
    t[i] = v;
    ptr = next;
  }
  return t;
}

}  // namespace gridfdi::neural
