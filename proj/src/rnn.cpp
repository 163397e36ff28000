#include "rulesim/rnn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rulesim/errors.hpp"
#include "rulesim/random.hpp"

namespace rulesim {

std::string_view to_string(Activation a) { return a == Activation::retanh ? "retanh" : "relu"; }

Activation parse_activation(std::string_view name) {
  if (name == "retanh") return Activation::retanh;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(LossKind k) { return k == LossKind::mse ? "mse" : "cross-entropy"; }

// max(0, tanh h) = (1 - e)/(1 + e) with e = exp(-2 max(h, 0)); Eigen
// vectorizes exp for doubles but not tanh.
Matrix activate(const Matrix& h, Activation kind) {
  if (kind == Activation::relu) return h.cwiseMax(0.0);
  const auto e = (-2.0 * h.array().max(0.0)).exp();
  return ((1.0 - e) / (1.0 + e)).matrix();
}

Matrix activation_derivative(const Matrix& h, Activation kind) {
  if (kind == Activation::relu) return (h.array() > 0.0).cast<double>().matrix();
  const Matrix r = activate(h, kind);
  return ((h.array() > 0.0).cast<double>() * (1.0 - r.array().square())).matrix();
}

ActivationResult activation_apply(const Vector& x, Activation kind) {
  return {activate(x, kind), activation_derivative(x, kind)};
}

void NetworkParams::apply_masks() {
  if (dale_sign) {
    w_rec = w_rec.cwiseAbs() * dale_sign->asDiagonal();
  }
  if (sparsity_mask) {
    w_rec = w_rec.cwiseProduct(*sparsity_mask);
  }
}

double leak_factor(double dt, double tau_m) {
  if (!(dt > 0.0) || !(tau_m > 0.0)) throw ConfigError("dt and tau_m must be positive");
  if (dt >= tau_m) {
    throw ConfigError("dt (" + std::to_string(dt) + " ms) must be smaller than tau_m (" + std::to_string(tau_m) +
                      " ms)");
  }
  return 1.0 - dt / tau_m;
}

NetworkParams init_params(const NetworkConfig& config, Seed seed) {
  if (config.n_units <= 0 || config.n_inputs <= 0 || config.n_outputs <= 0) {
    throw ConfigError("network dimensions must be positive");
  }
  if (config.gain < 0.0) throw ConfigError("gain must be non-negative");
  if (config.noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
  if (!(config.connection_density > 0.0 && config.connection_density <= 1.0)) {
    throw ConfigError("connection_density must lie in (0, 1]");
  }

  const int n = config.n_units;
  NetworkParams p;
  p.dt = config.dt;
  p.tau_m = config.tau_m;
  p.beta = leak_factor(config.dt, config.tau_m);
  p.activation = config.activation;
  p.noise_std = config.noise_std;
  p.gain = config.gain;

  Rng rng(derive_seed(seed, "init"));
  const double rec_std = config.gain / std::sqrt(static_cast<double>(n));
  p.w_rec.resize(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) p.w_rec(i, j) = rec_std * rng.normal();

  const double in_bound = config.input_scale / std::sqrt(static_cast<double>(config.n_inputs));
  p.w_in.resize(n, config.n_inputs);
  for (int j = 0; j < config.n_inputs; ++j)
    for (int i = 0; i < n; ++i) p.w_in(i, j) = rng.uniform(-in_bound, in_bound);

  const double out_bound = config.input_scale / std::sqrt(static_cast<double>(n));
  p.w_out.resize(config.n_outputs, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < config.n_outputs; ++i) p.w_out(i, j) = config.gain * rng.uniform(-out_bound, out_bound);

  if (config.dale) {
    const int n_exc = static_cast<int>(std::lround(config.excitatory_fraction * n));
    if (n_exc <= 0 || n_exc >= n) throw ConfigError("Dale's law needs both excitatory and inhibitory units");
    Vector sign(n);
    sign.head(n_exc).setOnes();
    sign.tail(n - n_exc).setConstant(-1.0);
    p.dale_sign = sign;
    p.w_rec.rightCols(n - n_exc) *= static_cast<double>(n_exc) / static_cast<double>(n - n_exc);
  }
  if (config.connection_density < 1.0) {
    Rng mask_rng(derive_seed(seed, "sparsity"));
    Matrix mask(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) mask(i, j) = mask_rng.uniform() < config.connection_density ? 1.0 : 0.0;
    p.sparsity_mask = mask;
  }
  p.apply_masks();
  return p;
}

namespace {

void check_batch(const NetworkParams& params, const TrialBatch& batch) {
  const int t_steps = batch.n_steps();
  if (t_steps == 0 || batch.n_trials() == 0) throw ShapeError("empty trial batch");
  if (batch.n_inputs() != params.n_inputs()) {
    throw ShapeError("batch input width " + std::to_string(batch.n_inputs()) + " != network input width " +
                     std::to_string(params.n_inputs()));
  }
  for (const auto& x : batch.inputs) {
    if (x.rows() != params.n_inputs() || x.cols() != batch.n_trials()) throw ShapeError("ragged input sequence");
  }
}

StateTrajectory forward_impl(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed, bool noisy) {
  check_batch(params, batch);
  const int t_steps = batch.n_steps();
  const int n_trials = batch.n_trials();
  const int n = params.n_units();

  StateTrajectory traj;
  traj.noise_seed = noise_seed;
  traj.hidden.reserve(static_cast<std::size_t>(t_steps));
  traj.rates.reserve(static_cast<std::size_t>(t_steps));
  traj.outputs.reserve(static_cast<std::size_t>(t_steps));

  Matrix h = Matrix::Zero(n, n_trials);
  Matrix r = activate(h, params.activation);
  Matrix drive(n, n_trials);
  Rng rng(noise_seed);
  const bool add_noise = noisy && params.noise_std > 0.0;

  for (int t = 0; t < t_steps; ++t) {
    drive.noalias() = params.w_rec * r;
    drive.noalias() += params.w_in * batch.inputs[static_cast<std::size_t>(t)];
    h = params.beta * h + (1.0 - params.beta) * drive;
    if (add_noise) {
      for (int b = 0; b < n_trials; ++b)
        for (int i = 0; i < n; ++i) h(i, b) += params.noise_std * rng.normal();
    }
    r = activate(h, params.activation);
    traj.hidden.push_back(h);
    traj.rates.push_back(r);
    traj.outputs.emplace_back(params.w_out * r);
  }
  return traj;
}

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

StateTrajectory rnn_forward(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed) {
  return forward_impl(params, batch, noise_seed, true);
}

StateTrajectory rnn_forward_noiseless(const NetworkParams& params, const TrialBatch& batch) {
  return forward_impl(params, batch, 0, false);
}

double loss_normaliser(const TrialBatch& batch) {
  const double masked = batch.loss_mask.sum();
  if (!(masked > 0.0)) throw DegenerateInputError("loss mask selects no time steps");
  if (batch.loss == LossKind::mse) {
    if (batch.targets.empty()) throw ShapeError("regression batch has no targets");
    return masked * static_cast<double>(batch.targets.front().rows());
  }
  return masked;
}

double step_loss(const Vector& output, const TrialBatch& batch, int t, int b, double normaliser) {
  const double m = batch.loss_mask(t, b);
  if (m == 0.0) return 0.0;
  if (batch.loss == LossKind::mse) {
    return m * 0.5 * (output - batch.targets[static_cast<std::size_t>(t)].col(b)).squaredNorm() / normaliser;
  }
  const int label = batch.labels[static_cast<std::size_t>(b)];
  return m * (log_sum_exp(output) - output(label)) / normaliser;
}

namespace {

void check_targets(const StateTrajectory& trajectory, const TrialBatch& batch) {
  if (trajectory.n_steps() != batch.n_steps() || trajectory.n_trials() != batch.n_trials()) {
    throw ShapeError("trajectory and batch disagree on steps or trials");
  }
  if (batch.loss_mask.rows() != batch.n_steps() || batch.loss_mask.cols() != batch.n_trials()) {
    throw ShapeError("loss mask must be T × B");
  }
  const int n_out = static_cast<int>(trajectory.outputs.front().rows());
  if (batch.loss == LossKind::mse) {
    if (static_cast<int>(batch.targets.size()) != batch.n_steps()) throw ShapeError("target sequence length != T");
    if (batch.targets.front().rows() != n_out) throw ShapeError("target width != readout width");
  } else {
    if (static_cast<int>(batch.labels.size()) != batch.n_trials()) throw ShapeError("one label per trial required");
    for (int label : batch.labels) {
      if (label < 0 || label >= n_out) throw ShapeError("class label outside readout range");
    }
  }
}

}  // namespace

double batch_loss(const StateTrajectory& trajectory, const TrialBatch& batch) {
  check_targets(trajectory, batch);
  const double norm = loss_normaliser(batch);
  double loss = 0.0;
  for (int t = 0; t < batch.n_steps(); ++t) {
    const Matrix& y = trajectory.outputs[static_cast<std::size_t>(t)];
    for (int b = 0; b < batch.n_trials(); ++b) loss += step_loss(y.col(b), batch, t, b, norm);
  }
  return loss;
}

Sequence instructive_signal(const Matrix& feedback, const Sequence& dl_dy, const StateTrajectory& trajectory,
                            Activation activation) {
  Sequence signal;
  signal.reserve(dl_dy.size());
  for (std::size_t t = 0; t < dl_dy.size(); ++t) {
    signal.emplace_back(activation_derivative(trajectory.hidden[t], activation).cwiseProduct(feedback * dl_dy[t]));
  }
  return signal;
}

LossSignal loss_and_signal(const NetworkParams& params, const StateTrajectory& trajectory,
                           const TrialBatch& batch) {
  check_targets(trajectory, batch);
  const double norm = loss_normaliser(batch);
  const int n_out = params.n_outputs();
  LossSignal out;
  out.dl_dy.reserve(static_cast<std::size_t>(batch.n_steps()));
  for (int t = 0; t < batch.n_steps(); ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const Matrix& y = trajectory.outputs[ts];
    Matrix grad = Matrix::Zero(n_out, batch.n_trials());
    for (int b = 0; b < batch.n_trials(); ++b) {
      const double m = batch.loss_mask(t, b);
      if (m == 0.0) continue;
      out.loss += step_loss(y.col(b), batch, t, b, norm);
      if (batch.loss == LossKind::mse) {
        grad.col(b) = m * (y.col(b) - batch.targets[ts].col(b)) / norm;
      } else {
        const Vector col = y.col(b);
        Vector p = (col.array() - log_sum_exp(col)).exp();
        p(batch.labels[static_cast<std::size_t>(b)]) -= 1.0;
        grad.col(b) = m * p / norm;
      }
    }
    out.dl_dy.push_back(std::move(grad));
  }
  out.dl_dh = instructive_signal(params.w_out.transpose(), out.dl_dy, trajectory, params.activation);
  return out;
}

double normalized_accuracy(const StateTrajectory& trajectory, const TrialBatch& batch) {
  check_targets(trajectory, batch);
  double score = 0.0;
  if (batch.loss == LossKind::mse) {
    double count = 0.0, sum = 0.0, peak = 0.0;
    for (int t = 0; t < batch.n_steps(); ++t) {
      for (int b = 0; b < batch.n_trials(); ++b) {
        if (batch.loss_mask(t, b) == 0.0) continue;
        const auto y = batch.targets[static_cast<std::size_t>(t)].col(b);
        count += static_cast<double>(y.size());
        sum += y.sum();
        peak = std::max(peak, y.cwiseAbs().maxCoeff());
      }
    }
    if (count == 0.0) throw DegenerateInputError("loss mask selects no time steps");
    const double mean = sum / count;
    double dev_sq = 0.0, err_sq = 0.0;
    for (int t = 0; t < batch.n_steps(); ++t) {
      const auto ts = static_cast<std::size_t>(t);
      for (int b = 0; b < batch.n_trials(); ++b) {
        if (batch.loss_mask(t, b) == 0.0) continue;
        const auto y = batch.targets[ts].col(b);
        dev_sq += (y.array() - mean).square().sum();
        err_sq += (trajectory.outputs[ts].col(b) - y).squaredNorm();
      }
    }
    const double var = dev_sq / count;
    // Constant targets leave only rounding residue in var.
    if (!(var > 1e-24 * std::max(peak * peak, 1e-300))) throw DegenerateInputError("masked targets have zero variance");
    score = 1.0 - (err_sq / count) / var;
  } else {
    // batch_loss already averages cross-entropy over masked steps.
    score = 1.0 - batch_loss(trajectory, batch);
  }
  return std::clamp(score, 0.0, 1.0);
}

std::vector<std::complex<double>> weight_eigenspectrum(const NetworkParams& params) {
  Eigen::EigenSolver<Matrix> solver(params.w_rec, false);
  std::vector<std::complex<double>> out;
  out.reserve(static_cast<std::size_t>(params.n_units()));
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) out.push_back(solver.eigenvalues()(i));
  return out;
}

}  // namespace rulesim
