#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "gridfdi/neural.hpp"
#include "support/gradcheck.hpp"

using namespace gridfdi;
using namespace gridfdi::neural;
using gridfdi::testsupport::check_gradients;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                     double scale = 0.5) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

// Plain scalar-loop LSTM step, written independently of the library: the
// reference oracle for lstm_cell_step.
void reference_lstm_step(const LstmCellParams& p, const std::vector<double>& x,
                         const std::vector<double>& h_prev,
                         const std::vector<double>& c_prev,
                         std::vector<double>& h_out,
                         std::vector<double>& c_out) {
  const std::size_t H = p.hidden_size();
  const std::size_t D = p.input_size();
  auto gate = [&](const Param& w, const Param& u, const Param& b,
                  std::size_t j) {
    double acc = b.value[j];
    for (std::size_t d = 0; d < D; ++d) acc += w.value(j, d) * x[d];
    for (std::size_t k = 0; k < H; ++k) acc += u.value(j, k) * h_prev[k];
    return acc;
  };
  h_out.resize(H);
  c_out.resize(H);
  for (std::size_t j = 0; j < H; ++j) {
    const double f = 1.0 / (1.0 + std::exp(-gate(p.w_f, p.u_f, p.b_f, j)));
    const double i = 1.0 / (1.0 + std::exp(-gate(p.w_i, p.u_i, p.b_i, j)));
    const double o = 1.0 / (1.0 + std::exp(-gate(p.w_o, p.u_o, p.b_o, j)));
    const double g = std::tanh(gate(p.w_c, p.u_c, p.b_c, j));
    c_out[j] = f * c_prev[j] + i * g;
    h_out[j] = o * std::tanh(c_out[j]);
  }
}

LstmCellParams random_cell(std::size_t input, std::size_t hidden, Rng& rng) {
  LstmCellParams params;
  params.init(input, hidden, rng);
  return params;
}

}  // namespace

TEST_SUITE("neural") {

TEST_CASE("zero-parameter cell: gates at 0.5, state and output zero") {
  Rng rng(1);
  LstmCellParams params = random_cell(3, 4, rng);
  for (auto* p : {&params.w_f, &params.w_i, &params.w_o, &params.w_c,
                  &params.u_f, &params.u_i, &params.u_o, &params.u_c,
                  &params.b_f, &params.b_i, &params.b_o, &params.b_c})
    p->value.fill(0.0);

  const Tensor x({3}), h0({4}), c0({4});
  const LstmStepCache cache = lstm_cell_step(params, x, h0, c0);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(cache.f[j] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(cache.i[j] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(cache.o[j] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(cache.c[j] == 0.0);
    CHECK(cache.h[j] == 0.0);
  }
}

TEST_CASE("zero-parameter cell halves the previous cell state") {
  Rng rng(2);
  LstmCellParams params = random_cell(3, 4, rng);
  for (auto* p : {&params.w_f, &params.w_i, &params.w_o, &params.w_c,
                  &params.u_f, &params.u_i, &params.u_o, &params.u_c,
                  &params.b_f, &params.b_i, &params.b_o, &params.b_c})
    p->value.fill(0.0);

  const Tensor x({3}), h0({4});
  Tensor v({4});
  v[0] = 0.3;
  v[1] = -1.2;
  v[2] = 2.0;
  v[3] = 0.0;
  const LstmStepCache cache = lstm_cell_step(params, x, h0, v);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(cache.c[j] == doctest::Approx(0.5 * v[j]).epsilon(1e-15));
    CHECK(cache.h[j] ==
          doctest::Approx(0.5 * std::tanh(0.5 * v[j])).epsilon(1e-15));
  }
}

TEST_CASE("cell step matches the independent scalar reference to 1e-12") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    LstmCellParams params = random_cell(3, 4, rng);
    const Tensor x = random_tensor({3}, rng);
    const Tensor h0 = random_tensor({4}, rng);
    const Tensor c0 = random_tensor({4}, rng);
    const LstmStepCache cache = lstm_cell_step(params, x, h0, c0);

    std::vector<double> xv(x.data(), x.data() + 3);
    std::vector<double> hv(h0.data(), h0.data() + 4);
    std::vector<double> cv(c0.data(), c0.data() + 4);
    std::vector<double> h_ref, c_ref;
    reference_lstm_step(params, xv, hv, cv, h_ref, c_ref);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(cache.h[j] == doctest::Approx(h_ref[j]).epsilon(1e-12));
      CHECK(cache.c[j] == doctest::Approx(c_ref[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("cell shape mismatches are contract errors") {
  Rng rng(4);
  LstmCellParams params = random_cell(3, 4, rng);
  CHECK_THROWS_AS(lstm_cell_step(params, Tensor({2}), Tensor({4}), Tensor({4})),
                  ContractError);
  CHECK_THROWS_AS(lstm_cell_step(params, Tensor({3}), Tensor({5}), Tensor({4})),
                  ContractError);
}

TEST_CASE("empty sequences are rejected") {
  Rng rng(5);
  LstmCellParams params = random_cell(3, 4, rng);
  LstmSequenceCache cache;
  CHECK_THROWS_AS(lstm_forward(params, Tensor({0, 3}), cache), ContractError);
}

TEST_CASE("bilstm with T = 1 feeds both cells the same input") {
  Rng rng(6);
  BiLstmLayerParams layer;
  layer.init(3, 4, rng);
  layer.backward_cell = layer.forward_cell;  // shared directions
  const Tensor seq = random_tensor({1, 3}, rng);
  BiLstmCache cache;
  const Tensor out = bilstm_forward(layer, seq, cache);
  REQUIRE(out.shape() == std::vector<std::size_t>{1, 8});
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(out(0, j) == doctest::Approx(out(0, 4 + j)).epsilon(1e-15));
}

TEST_CASE("palindromic input with shared directions gives half-swapped outputs") {
  Rng rng(7);
  BiLstmLayerParams layer;
  layer.init(2, 3, rng);
  layer.backward_cell = layer.forward_cell;
  Tensor seq({5, 2});
  for (std::size_t t = 0; t < 5; ++t) {
    const std::size_t mirror = std::min(t, 4 - t);
    seq(t, 0) = 0.3 * double(mirror);
    seq(t, 1) = -0.1 * double(mirror);
  }
  BiLstmCache cache;
  const Tensor out = bilstm_forward(layer, seq, cache);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(out(t, j) == doctest::Approx(out(4 - t, 3 + j)).epsilon(1e-12));
}

TEST_CASE("zero-parameter bilstm emits zeros") {
  Rng rng(8);
  BiLstmLayerParams layer;
  layer.init(3, 4, rng);
  std::vector<ParamRef> params;
  layer.collect("layer", params);
  for (auto& ref : params) ref.param->value.fill(0.0);
  BiLstmCache cache;
  const Tensor out = bilstm_forward(layer, random_tensor({4, 3}, rng), cache);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("conv1d with identity kernel reproduces the input") {
  Conv1dParams conv;
  Rng rng(9);
  conv.init(1, 1, 1, 1, 0, rng);
  conv.kernels.value(0, 0, 0) = 1.0;
  conv.bias.value[0] = 0.0;
  const Tensor input = random_tensor({1, 7}, rng);
  const Tensor out = conv1d_forward(conv, input);
  REQUIRE(out.shape() == input.shape());
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == input[i]);
}

TEST_CASE("conv1d hand cross-correlation: [1,1] * (1,2,3) = (3,5)") {
  Conv1dParams conv;
  Rng rng(10);
  conv.init(1, 1, 2, 1, 0, rng);
  conv.kernels.value(0, 0, 0) = 1.0;
  conv.kernels.value(0, 0, 1) = 1.0;
  conv.bias.value[0] = 0.0;
  Tensor input({1, 3});
  input(0, 0) = 1.0;
  input(0, 1) = 2.0;
  input(0, 2) = 3.0;
  const Tensor out = conv1d_forward(conv, input);
  REQUIRE(out.shape() == std::vector<std::size_t>{1, 2});
  CHECK(out(0, 0) == 3.0);
  CHECK(out(0, 1) == 5.0);
}

TEST_CASE("same-padding arithmetic keeps the length") {
  Conv1dParams conv;
  Rng rng(11);
  conv.init(2, 3, 3, 1, 1, rng);
  const Tensor input = random_tensor({2, 9}, rng);
  CHECK(conv1d_forward(conv, input).dim(1) == 9);
}

TEST_CASE("conv1d size underflow is a contract error") {
  Conv1dParams conv;
  Rng rng(12);
  conv.init(1, 1, 5, 1, 0, rng);
  CHECK_THROWS_AS(conv1d_forward(conv, Tensor({1, 3})), ContractError);
}

TEST_CASE("conv1d with zero bias is linear") {
  Conv1dParams conv;
  Rng rng(13);
  conv.init(2, 3, 3, 1, 1, rng);
  conv.bias.value.fill(0.0);
  const Tensor x = random_tensor({2, 8}, rng);
  const Tensor y = random_tensor({2, 8}, rng);
  const double alpha = 0.7, beta = -1.3;
  Tensor mix({2, 8});
  for (std::size_t i = 0; i < mix.size(); ++i)
    mix[i] = alpha * x[i] + beta * y[i];
  const Tensor fx = conv1d_forward(conv, x);
  const Tensor fy = conv1d_forward(conv, y);
  const Tensor fmix = conv1d_forward(conv, mix);
  for (std::size_t i = 0; i < fmix.size(); ++i)
    CHECK(fmix[i] == doctest::Approx(alpha * fx[i] + beta * fy[i])
                         .epsilon(1e-12));
}

TEST_CASE("maxpool forward picks maxima and backward scatters to them") {
  MaxPool1dConfig pool{2, 2};
  Tensor input({1, 6});
  const double values[] = {1.0, 3.0, -2.0, 5.0, 4.0, 0.5};
  for (std::size_t i = 0; i < 6; ++i) input(0, i) = values[i];
  Tensor argmax;
  const Tensor out = maxpool1d_forward(pool, input, argmax);
  REQUIRE(out.shape() == std::vector<std::size_t>{1, 3});
  CHECK(out(0, 0) == 3.0);
  CHECK(out(0, 1) == 5.0);
  CHECK(out(0, 2) == 4.0);
  Tensor dout({1, 3});
  dout.fill(1.0);
  const Tensor din = maxpool1d_backward(pool, argmax, dout, {1, 6});
  CHECK(din(0, 1) == 1.0);
  CHECK(din(0, 3) == 1.0);
  CHECK(din(0, 4) == 1.0);
  CHECK(din(0, 0) == 0.0);
}

TEST_CASE("dense layer computes W x + b") {
  DenseParams dense;
  Rng rng(14);
  dense.init(3, 2, rng);
  dense.w.value(0, 0) = 1.0;
  dense.w.value(0, 1) = 2.0;
  dense.w.value(0, 2) = 3.0;
  dense.w.value(1, 0) = -1.0;
  dense.w.value(1, 1) = 0.0;
  dense.w.value(1, 2) = 1.0;
  dense.b.value[0] = 0.5;
  dense.b.value[1] = -0.5;
  Tensor x({3});
  x[0] = 1.0;
  x[1] = 1.0;
  x[2] = 1.0;
  const Tensor y = dense_forward(dense, x);
  CHECK(y[0] == doctest::Approx(6.5).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("constant loss has zero gradients") {
  DenseParams dense;
  Rng rng(15);
  dense.init(3, 2, rng);
  const Tensor x = random_tensor({3}, rng);
  const Tensor y = dense_forward(dense, x);
  Tensor dpred;
  const double loss = mse_loss(y, y, &dpred);  // prediction equals target
  CHECK(loss == 0.0);
  std::vector<ParamRef> params;
  dense.collect("dense", params);
  zero_grads(params);
  Tensor dx;
  dense_backward(dense, x, dpred, dx);
  for (const auto& ref : params)
    for (std::size_t i = 0; i < ref.param->grad.size(); ++i)
      CHECK(ref.param->grad[i] == 0.0);
}

// ---------------------------------------------------------------------------
// gradient checks (finite-difference oracle)

TEST_CASE("dense gradients match finite differences") {
  Rng rng(16);
  DenseParams dense;
  dense.init(4, 3, rng);
  const Tensor x = random_tensor({4}, rng);
  const Tensor target = random_tensor({3}, rng);
  std::vector<ParamRef> params;
  dense.collect("dense", params);

  auto loss_fn = [&] { return mse_loss(dense_forward(dense, x), target); };
  auto compute = [&] {
    zero_grads(params);
    Tensor dpred, dx;
    mse_loss(dense_forward(dense, x), target, &dpred);
    dense_backward(dense, x, dpred, dx);
  };
  const auto report = check_gradients(params, loss_fn, compute);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("2-step hidden-size-3 LSTM gradients match finite differences") {
  Rng rng(17);
  LstmCellParams cell = random_cell(2, 3, rng);
  const Tensor seq = random_tensor({2, 2}, rng);
  const Tensor target = random_tensor({2, 3}, rng);
  std::vector<ParamRef> params;
  cell.collect("cell", params);

  auto loss_fn = [&] {
    LstmSequenceCache cache;
    return mse_loss(lstm_forward(cell, seq, cache), target);
  };
  auto compute = [&] {
    zero_grads(params);
    LstmSequenceCache cache;
    Tensor dpred;
    mse_loss(lstm_forward(cell, seq, cache), target, &dpred);
    lstm_backward(cell, cache, dpred);
  };
  const auto report = check_gradients(params, loss_fn, compute);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("LSTM input gradients match finite differences") {
  Rng rng(18);
  LstmCellParams cell = random_cell(2, 3, rng);
  Tensor seq = random_tensor({3, 2}, rng);
  const Tensor target = random_tensor({3, 3}, rng);

  LstmSequenceCache cache;
  Tensor dpred;
  std::vector<ParamRef> params;
  cell.collect("cell", params);
  zero_grads(params);
  mse_loss(lstm_forward(cell, seq, cache), target, &dpred);
  const Tensor dseq = lstm_backward(cell, cache, dpred);

  const double h = 1e-5;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const double original = seq[i];
    seq[i] = original + h;
    LstmSequenceCache c1;
    const double plus = mse_loss(lstm_forward(cell, seq, c1), target);
    seq[i] = original - h;
    LstmSequenceCache c2;
    const double minus = mse_loss(lstm_forward(cell, seq, c2), target);
    seq[i] = original;
    const double numeric = (plus - minus) / (2.0 * h);
    CHECK(dseq[i] == doctest::Approx(numeric).epsilon(1e-4));
  }
}

TEST_CASE("bilstm gradients match finite differences") {
  Rng rng(19);
  BiLstmLayerParams layer;
  layer.init(2, 3, rng);
  const Tensor seq = random_tensor({4, 2}, rng);
  const Tensor target = random_tensor({4, 6}, rng);
  std::vector<ParamRef> params;
  layer.collect("layer", params);

  auto loss_fn = [&] {
    BiLstmCache cache;
    return mse_loss(bilstm_forward(layer, seq, cache), target);
  };
  auto compute = [&] {
    zero_grads(params);
    BiLstmCache cache;
    Tensor dpred;
    mse_loss(bilstm_forward(layer, seq, cache), target, &dpred);
    bilstm_backward(layer, cache, dpred);
  };
  const auto report = check_gradients(params, loss_fn, compute);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("conv1d kernel gradients on a 5-sample input match to 1e-6") {
  Rng rng(20);
  Conv1dParams conv;
  conv.init(2, 2, 3, 1, 1, rng);
  const Tensor input = random_tensor({2, 5}, rng);
  const Tensor target = random_tensor({2, 5}, rng);
  std::vector<ParamRef> params;
  conv.collect("conv", params);

  auto loss_fn = [&] { return mse_loss(conv1d_forward(conv, input), target); };
  auto compute = [&] {
    zero_grads(params);
    Tensor dpred;
    mse_loss(conv1d_forward(conv, input), target, &dpred);
    conv1d_backward(conv, input, dpred);
  };
  const auto report = check_gradients(params, loss_fn, compute);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("mse gradient matches finite differences") {
  Rng rng(21);
  Tensor pred = random_tensor({6}, rng);
  const Tensor target = random_tensor({6}, rng);
  Tensor dpred;
  mse_loss(pred, target, &dpred);
  const double h = 1e-6;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double original = pred[i];
    pred[i] = original + h;
    const double plus = mse_loss(pred, target);
    pred[i] = original - h;
    const double minus = mse_loss(pred, target);
    pred[i] = original;
    CHECK(dpred[i] ==
          doctest::Approx((plus - minus) / (2.0 * h)).epsilon(1e-6));
  }
}

// ---------------------------------------------------------------------------
// state bounds, Adam, determinism, checkpoint primitives

TEST_CASE("LSTM outputs stay in tanh range and cell state grows at most linearly") {
  Rng rng(22);
  LstmCellParams cell = random_cell(3, 5, rng);
  Tensor h({5}), c({5});
  for (int t = 1; t <= 200; ++t) {
    const LstmStepCache cache =
        lstm_cell_step(cell, random_tensor({3}, rng, 2.0), h, c);
    h = cache.h;
    c = cache.c;
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(std::abs(h[j]) <= 1.0);
      CHECK(std::abs(c[j]) <= double(t) + 1e-12);  // |c_t| <= |c_{t-1}| + 1
    }
  }
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  Rng rng(23);
  DenseParams dense;
  dense.init(3, 2, rng);
  std::vector<ParamRef> params;
  dense.collect("dense", params);
  const Tensor before = dense.w.value;
  zero_grads(params);
  AdamState adam;
  adam.step(params);
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(dense.w.value[i] == before[i]);
}

TEST_CASE("first adam step with unit gradient moves by lr/(1+eps)") {
  Param scalar;
  scalar.resize({1});
  scalar.value[0] = 0.25;
  scalar.grad[0] = 1.0;
  std::vector<ParamRef> params{{"scalar", &scalar}};
  AdamState adam;  // lr 1e-3, eps 1e-8
  adam.step(params);
  const double expected_delta = -1e-3 / (1.0 + 1e-8);
  CHECK(scalar.value[0] - 0.25 ==
        doctest::Approx(expected_delta).epsilon(1e-12));
}

TEST_CASE("constant gradient drives the update magnitude to lr") {
  Param scalar;
  scalar.resize({1});
  std::vector<ParamRef> params{{"scalar", &scalar}};
  AdamState adam;
  double previous = 0.0;
  double delta = 0.0;
  for (int t = 0; t < 5000; ++t) {
    previous = scalar.value[0];
    scalar.grad[0] = 1.0;
    adam.step(params);
    delta = scalar.value[0] - previous;
  }
  CHECK(std::abs(delta) == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("non-finite gradients raise TrainingError naming the block") {
  Param bad;
  bad.resize({2});
  bad.grad[1] = std::numeric_limits<double>::quiet_NaN();
  std::vector<ParamRef> params{{"blockname", &bad}};
  AdamState adam;
  try {
    adam.step(params);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("blockname") != std::string::npos);
  }
}

TEST_CASE("initialization is seeded-deterministic and respects fan-in bounds") {
  Rng a(30), b(30);
  LstmCellParams cell_a = random_cell(7, 5, a);
  LstmCellParams cell_b = random_cell(7, 5, b);
  CHECK(cell_a.w_f.value.size() == cell_b.w_f.value.size());
  for (std::size_t i = 0; i < cell_a.w_f.value.size(); ++i) {
    CHECK(cell_a.w_f.value[i] == cell_b.w_f.value[i]);
    CHECK(std::abs(cell_a.w_f.value[i]) <= 1.0 / std::sqrt(7.0));
  }
  for (std::size_t j = 0; j < 5; ++j) CHECK(cell_a.b_f.value[j] == 1.0);
}

TEST_CASE("tensor text format round-trips bit-exactly") {
  Rng rng(31);
  const Tensor t = random_tensor({3, 4}, rng, 1e7);
  std::stringstream stream;
  write_tensor(stream, "weights", t);
  std::string name;
  const Tensor back = read_tensor(stream, name);
  CHECK(name == "weights");
  REQUIRE(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
}

}  // TEST_SUITE
