#pragma once

#include <complex>
#include <optional>
#include <string_view>
#include <vector>

#include "rulesim/types.hpp"

namespace rulesim {

/// retanh(x) = max(0, tanh x); relu(x) = max(0, x). Both derivatives are
/// taken as 0 at x = 0 (left limit).
enum class Activation { retanh, relu };

enum class LossKind { mse, cross_entropy };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);
std::string_view to_string(LossKind k);

struct NetworkConfig {
  int n_units = 200;
  int n_inputs = 1;
  int n_outputs = 1;
  double dt = 10.0;     // ms
  double tau_m = 50.0;  // ms
  Activation activation = Activation::retanh;
  double noise_std = 0.1;
  /// Scale on the recurrent and readout initial weights.
  double gain = 1.0;
  /// Input and readout weights start uniform in ±input_scale/sqrt(fan_in).
  double input_scale = 1.0;
  bool dale = false;
  double excitatory_fraction = 0.8;
  /// Fraction of recurrent weights that exist and train; 1 disables the mask.
  double connection_density = 1.0;
};

/// Leaky rate network
///   h_{t+1} = beta h_t + (1 - beta)(W_rec f(h_t) + W_in x_t) + xi_t,  y_t = W_out f(h_t)
/// with beta = 1 - dt / tau_m.
struct NetworkParams {
  Matrix w_in;   // N × N_in
  Matrix w_rec;  // N × N
  Matrix w_out;  // N_out × N
  double beta = 0.0;
  double dt = 1.0;
  double tau_m = 1.0;
  Activation activation = Activation::retanh;
  double noise_std = 0.0;
  double gain = 1.0;
  /// ±1 per presynaptic column when Dale's law is enforced.
  std::optional<Vector> dale_sign;
  /// 0/1 per recurrent entry when connectivity is sparse.
  std::optional<Matrix> sparsity_mask;

  int n_units() const { return static_cast<int>(w_rec.rows()); }
  int n_inputs() const { return static_cast<int>(w_in.cols()); }
  int n_outputs() const { return static_cast<int>(w_out.rows()); }

  /// Projects w_rec back onto the constraint set: |W| times column sign for
  /// Dale's law, then zeroes entries outside the sparsity mask. Idempotent.
  void apply_masks();
};

/// Throws ConfigError unless 0 < dt < tau_m.
double leak_factor(double dt, double tau_m);

/// W_rec ~ N(0, g²/N); W_in ~ U(±input_scale/sqrt(N_in)); W_out ~ g·U(±input_scale/sqrt(N)).
/// With Dale's law the first round(excitatory_fraction·N) units are
/// excitatory and inhibitory columns are scaled by n_exc/n_inh so that the
/// expected input to each unit is zero.
NetworkParams init_params(const NetworkConfig& config, Seed seed);

struct TrialBatch {
  Sequence inputs;   // [t]: N_in × B
  Sequence targets;  // [t]: N_out × B, regression only
  std::vector<int> labels;  // class per trial, classification only
  Matrix loss_mask;         // T × B, entries in {0, 1}
  std::vector<int> condition_ids;
  LossKind loss = LossKind::mse;

  int n_steps() const { return static_cast<int>(inputs.size()); }
  int n_trials() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().cols()); }
  int n_inputs() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().rows()); }
};

struct StateTrajectory {
  Sequence hidden;   // [t]: N × B, state after consuming x_t
  Sequence rates;    // f(hidden)
  Sequence outputs;  // W_out · rates
  Seed noise_seed = 0;

  int n_steps() const { return static_cast<int>(hidden.size()); }
  int n_trials() const { return hidden.empty() ? 0 : static_cast<int>(hidden.front().cols()); }
};

struct ActivationResult {
  Vector value;
  Vector derivative;
};

ActivationResult activation_apply(const Vector& x, Activation kind);
Matrix activate(const Matrix& h, Activation kind);
Matrix activation_derivative(const Matrix& h, Activation kind);

/// h_0 = 0. Noise xi_t ~ N(0, noise_std²) is drawn per step in trial-major,
/// unit-minor order from Rng(noise_seed) and added after the leaky update.
/// Throws ShapeError when the batch does not match the network.
StateTrajectory rnn_forward(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed);

/// Forward pass with the hidden noise switched off.
StateTrajectory rnn_forward_noiseless(const NetworkParams& params, const TrialBatch& batch);

struct LossSignal {
  double loss = 0.0;
  Sequence dl_dy;  // [t]: N_out × B
  /// Readout-only partial dL/dh_t (no flow through time): the instructive
  /// signal of the three-factor rules.
  Sequence dl_dh;  // [t]: N × B
};

/// mse:            L = 1/(2M) Σ mask (y - ŷ)²   with M = (masked steps) · N_out
/// cross-entropy:  L = 1/M Σ mask (-log softmax(ŷ)_label)  with M = masked steps
/// Throws DegenerateInputError when the mask is all zero.
LossSignal loss_and_signal(const NetworkParams& params, const StateTrajectory& trajectory,
                           const TrialBatch& batch);

/// Loss only; same conventions as loss_and_signal.
double batch_loss(const StateTrajectory& trajectory, const TrialBatch& batch);

/// Per-trial loss contribution of step t for trial b given readout ŷ
/// (already divided by the batch normaliser M).
double step_loss(const Vector& output, const TrialBatch& batch, int t, int b, double normaliser);
double loss_normaliser(const TrialBatch& batch);

/// I_t = f'(h_t) ⊙ (feedback · dL/dŷ_t); feedback = W_outᵀ gives the exact partial.
Sequence instructive_signal(const Matrix& feedback, const Sequence& dl_dy, const StateTrajectory& trajectory,
                            Activation activation);

/// 1 - MSE/Var(targets) over masked entries (regression) or 1 - cross-entropy
/// (classification), clamped to [0, 1]. Throws DegenerateInputError when the
/// masked targets have zero variance.
double normalized_accuracy(const StateTrajectory& trajectory, const TrialBatch& batch);

std::vector<std::complex<double>> weight_eigenspectrum(const NetworkParams& params);

}  // namespace rulesim
