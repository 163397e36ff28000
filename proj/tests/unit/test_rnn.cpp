#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "rulesim/errors.hpp"
#include "rulesim/rnn.hpp"

using namespace rulesim;
using testutil::random_batch;
using testutil::random_params;

namespace {

NetworkConfig config_of(int n, double gain) {
  NetworkConfig c;
  c.n_units = n;
  c.n_inputs = 2;
  c.n_outputs = 1;
  c.gain = gain;
  return c;
}

TrialBatch constant_batch(int t_steps, const Matrix& x) {
  TrialBatch b;
  for (int t = 0; t < t_steps; ++t) b.inputs.push_back(x);
  b.loss_mask = Matrix::Ones(t_steps, x.cols());
  for (int t = 0; t < t_steps; ++t) b.targets.push_back(Matrix::Zero(1, x.cols()));
  return b;
}

}  // namespace

TEST_CASE("init: zero gain gives a zero recurrent matrix") {
  for (Seed s : {1u, 2u, 99u}) CHECK(init_params(config_of(50, 0.0), s).w_rec.isZero(0.0));
}

TEST_CASE("init: recurrent variance tracks g^2/N") {
  for (double g : {1.0, 1.5}) {
    double var = 0.0;
    for (Seed s = 1; s <= 10; ++s) {
      const Matrix w = init_params(config_of(200, g), s).w_rec;
      const double m = w.mean();
      var += (w.array() - m).square().sum() / static_cast<double>(w.size() - 1);
    }
    var /= 10.0;
    CHECK(var == doctest::Approx(g * g / 200.0).epsilon(0.10));
  }
}

TEST_CASE("init: dt >= tau_m is a configuration error") {
  NetworkConfig c = config_of(10, 1.0);
  c.dt = 50.0;
  c.tau_m = 50.0;
  CHECK_THROWS_AS(init_params(c, 1), ConfigError);
  CHECK(leak_factor(10.0, 50.0) == 0.8);
}

TEST_CASE("init: Dale columns share one sign and masks are idempotent") {
  NetworkConfig c = config_of(40, 1.0);
  c.dale = true;
  c.connection_density = 0.5;
  NetworkParams p = init_params(c, 3);
  REQUIRE(p.dale_sign);
  CHECK((*p.dale_sign).head(32).minCoeff() == 1.0);
  CHECK((*p.dale_sign).tail(8).maxCoeff() == -1.0);
  for (int j = 0; j < 40; ++j) {
    const double s = (*p.dale_sign)(j);
    CHECK((p.w_rec.col(j).array() * s).minCoeff() >= 0.0);
  }
  CHECK((p.w_rec.array() * (1.0 - p.sparsity_mask->array())).abs().maxCoeff() == 0.0);
  const Matrix once = p.w_rec;
  p.apply_masks();
  CHECK(p.w_rec == once);
}

TEST_CASE("activation values and derivatives") {
  Vector x(4);
  x << -1.0, 0.5, 0.0, 2.0;
  const ActivationResult r = activation_apply(x, Activation::retanh);
  CHECK(r.value(0) == 0.0);
  CHECK(r.derivative(0) == 0.0);
  CHECK(r.value(1) == doctest::Approx(std::tanh(0.5)).epsilon(1e-14));
  CHECK(r.value(1) == doctest::Approx(0.4621).epsilon(1e-4));
  CHECK(r.derivative(1) == doctest::Approx(1.0 - std::tanh(0.5) * std::tanh(0.5)).epsilon(1e-14));
  CHECK(r.derivative(1) == doctest::Approx(0.7864).epsilon(1e-4));
  CHECK(r.derivative(2) == 0.0);
  const ActivationResult q = activation_apply(x, Activation::relu);
  CHECK(q.value(3) == 2.0);
  CHECK(q.derivative(3) == 1.0);
  CHECK(q.derivative(2) == 0.0);
  Vector big(3);
  big << 30.0, 400.0, 1e-9;
  const ActivationResult b = activation_apply(big, Activation::retanh);
  CHECK(b.value(0) == doctest::Approx(1.0));
  CHECK(b.value(1) == 1.0);
  CHECK(b.value(2) == doctest::Approx(1e-9).epsilon(1e-6));
}

TEST_CASE("forward: silent network stays at zero") {
  NetworkParams p = random_params(6, 2, 1, Activation::retanh, 1);
  p.w_rec.setZero();
  p.w_in.setZero();
  p.noise_std = 0.0;
  const StateTrajectory tr = rnn_forward(p, constant_batch(5, Matrix::Ones(2, 3)), 7);
  for (const auto& h : tr.hidden) CHECK(h.isZero(0.0));
}

TEST_CASE("forward: hand recursion for one relu unit") {
  NetworkParams p;
  p.w_in = Matrix::Ones(1, 1);
  p.w_rec = Matrix::Zero(1, 1);
  p.w_out = Matrix::Ones(1, 1);
  p.beta = 0.5;
  p.activation = Activation::relu;
  const StateTrajectory tr = rnn_forward(p, constant_batch(2, Matrix::Ones(1, 1)), 0);
  CHECK(tr.hidden[0](0, 0) == 0.5);
  CHECK(tr.hidden[1](0, 0) == 0.75);
}

TEST_CASE("forward: determinism, rates and shape errors") {
  const NetworkParams p = random_params(8, 3, 2, Activation::retanh, 4, 0.1);
  const TrialBatch b = random_batch(10, 4, 3, 2, LossKind::mse, 5);
  const StateTrajectory a = rnn_forward(p, b, 11);
  const StateTrajectory c = rnn_forward(p, b, 11);
  const StateTrajectory d = rnn_forward(p, b, 12);
  bool same = true, differs = false;
  for (std::size_t t = 0; t < a.hidden.size(); ++t) {
    same = same && a.hidden[t] == c.hidden[t] && a.outputs[t] == c.outputs[t];
    differs = differs || a.hidden[t] != d.hidden[t];
    CHECK(a.rates[t] == activate(a.hidden[t], Activation::retanh));
    CHECK(a.rates[t].minCoeff() >= 0.0);
  }
  CHECK(same);
  CHECK(differs);
  const TrialBatch wrong = random_batch(10, 4, 2, 2, LossKind::mse, 5);
  CHECK_THROWS_AS(rnn_forward(p, wrong, 1), ShapeError);
}

TEST_CASE("forward: leak contraction and relu homogeneity") {
  NetworkParams p = random_params(5, 2, 1, Activation::relu, 2);
  p.w_rec.setZero();
  p.w_in = p.w_in.cwiseAbs();
  TrialBatch b = constant_batch(6, Matrix::Zero(2, 1));
  b.inputs[0] = Matrix::Ones(2, 1);
  const StateTrajectory tr = rnn_forward_noiseless(p, b);
  for (int t = 1; t < 6; ++t) CHECK(tr.hidden[t].norm() == doctest::Approx(p.beta * tr.hidden[t - 1].norm()).epsilon(1e-15));

  TrialBatch twice = constant_batch(4, 2.0 * Matrix::Ones(2, 1));
  const StateTrajectory one = rnn_forward_noiseless(p, constant_batch(4, Matrix::Ones(2, 1)));
  const StateTrajectory two = rnn_forward_noiseless(p, twice);
  for (int t = 0; t < 4; ++t) CHECK(two.hidden[t] == 2.0 * one.hidden[t]);
}

TEST_CASE("loss: perfect outputs, scalar example and empty mask") {
  NetworkParams p;
  p.w_in = Matrix::Ones(1, 1);
  p.w_rec = Matrix::Zero(1, 1);
  p.w_out = Matrix::Ones(1, 1);
  p.beta = 0.5;
  p.activation = Activation::relu;
  TrialBatch b = constant_batch(1, Matrix::Ones(1, 1));
  StateTrajectory tr;
  tr.hidden = {Matrix::Constant(1, 1, 1.0)};
  tr.rates = tr.hidden;
  tr.outputs = {Matrix::Constant(1, 1, 1.0)};
  const LossSignal s = loss_and_signal(p, tr, b);
  CHECK(s.loss == 0.5);
  CHECK(s.dl_dy[0](0, 0) == 1.0);

  b.targets[0](0, 0) = 1.0;
  const LossSignal zero = loss_and_signal(p, tr, b);
  CHECK(zero.loss == 0.0);
  CHECK(zero.dl_dy[0].isZero(0.0));

  b.loss_mask.setZero();
  CHECK_THROWS_AS(loss_and_signal(p, tr, b), DegenerateInputError);
}

TEST_CASE("loss: readout-only partial matches finite differences in h_t") {
  for (LossKind kind : {LossKind::mse, LossKind::cross_entropy}) {
    const NetworkParams p = random_params(6, 2, 3, Activation::retanh, 9);
    const TrialBatch b = random_batch(5, 2, 2, 3, kind, 10);
    StateTrajectory tr = rnn_forward_noiseless(p, b);
    const LossSignal s = loss_and_signal(p, tr, b);
    for (int t = 0; t < 5; ++t) {
      Matrix& h = tr.hidden[static_cast<std::size_t>(t)];
      const auto loss_at = [&]() {
        StateTrajectory probe = tr;
        probe.rates[static_cast<std::size_t>(t)] = activate(h, p.activation);
        probe.outputs[static_cast<std::size_t>(t)] = p.w_out * probe.rates[static_cast<std::size_t>(t)];
        return batch_loss(probe, b);
      };
      const Matrix fd = testutil::central_difference(h, loss_at, 1e-5);
      CHECK(testutil::max_relative_error(fd, s.dl_dh[static_cast<std::size_t>(t)]) < 1e-6);
    }
  }
}

TEST_CASE("normalized accuracy: perfect, mean predictor and uniform classes") {
  const TrialBatch b = random_batch(4, 3, 2, 2, LossKind::mse, 3);
  StateTrajectory tr;
  tr.outputs = b.targets;
  tr.hidden = tr.rates = Sequence(4, Matrix::Zero(1, 3));
  CHECK(normalized_accuracy(tr, b) == 1.0);
  double sum = 0.0;
  for (const auto& y : b.targets) sum += y.sum();
  const double m = sum / (4 * 3 * 2);
  tr.outputs = Sequence(4, Matrix::Constant(2, 3, m));
  CHECK(normalized_accuracy(tr, b) == doctest::Approx(0.0).epsilon(1e-12));

  TrialBatch c = random_batch(4, 3, 2, 2, LossKind::cross_entropy, 3);
  tr.outputs = Sequence(4, Matrix::Zero(2, 3));
  CHECK(normalized_accuracy(tr, c) == doctest::Approx(1.0 - std::numbers::ln2).epsilon(1e-12));

  TrialBatch flat = b;
  for (auto& y : flat.targets) y.setConstant(0.3);
  CHECK_THROWS_AS(normalized_accuracy(tr, flat), DegenerateInputError);
}

TEST_CASE("eigenspectrum: zero, identity and circular law") {
  NetworkParams p = random_params(20, 1, 1, Activation::retanh, 1);
  p.w_rec.setZero();
  for (const auto& z : weight_eigenspectrum(p)) CHECK(std::abs(z) == 0.0);
  p.w_rec.setIdentity();
  const auto eig = weight_eigenspectrum(p);
  CHECK(eig.size() == 20);
  for (const auto& z : eig) CHECK(std::abs(z - 1.0) < 1e-12);

  double radius = 0.0;
  for (Seed s = 1; s <= 10; ++s) {
    double r = 0.0;
    for (const auto& z : weight_eigenspectrum(init_params(config_of(200, 1.0), s))) r = std::max(r, std::abs(z));
    radius += r / 10.0;
  }
  CHECK(radius == doctest::Approx(1.0).epsilon(0.15));
}
