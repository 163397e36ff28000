#include "rulesim/eligibility.hpp"

#include "rulesim/errors.hpp"

namespace rulesim {

EligibilityState::EligibilityState(int n_units, int n_inputs)
    : recurrent_(Matrix::Zero(n_units, n_units)), input_(Matrix::Zero(n_units, n_inputs)) {}

void EligibilityState::advance(const Vector& self_factor, const Vector& pre_recurrent, const Vector& pre_input) {
  if (self_factor.size() != recurrent_.rows() || pre_recurrent.size() != recurrent_.cols() ||
      pre_input.size() != input_.cols()) {
    throw ShapeError("eligibility update has mismatched sizes");
  }
  recurrent_ = self_factor.asDiagonal() * recurrent_;
  recurrent_.rowwise() += pre_recurrent.transpose();
  input_ = self_factor.asDiagonal() * input_;
  input_.rowwise() += pre_input.transpose();
  ++step_;
}

void EligibilityState::reset() {
  recurrent_.setZero();
  input_.setZero();
  step_ = 0;
}

GradientSet eprop_gradient_online(const NetworkParams& params, const TrialBatch& batch,
                                  const StateTrajectory& trajectory, const Sequence& dl_dy, const Sequence& signal) {
  const int n = params.n_units();
  const int t_steps = batch.n_steps();
  if (trajectory.n_steps() != t_steps || static_cast<int>(signal.size()) != t_steps ||
      static_cast<int>(dl_dy.size()) != t_steps) {
    throw ShapeError("trajectory, readout error and signal must all span T steps");
  }
  const double leak = 1.0 - params.beta;
  const Vector w_diag = params.w_rec.diagonal();
  GradientSet g = GradientSet::zeros_like(params, Rule::eprop);

  EligibilityState state(n, params.n_inputs());
  for (int b = 0; b < batch.n_trials(); ++b) {
    state.reset();
    Vector prev_h = Vector::Zero(n);
    for (int t = 0; t < t_steps; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      const ActivationResult prev = activation_apply(prev_h, params.activation);
      const Vector self = (params.beta + leak * w_diag.array() * prev.derivative.array()).matrix();
      state.advance(self, leak * prev.value, leak * batch.inputs[ts].col(b));
      const Vector learning = signal[ts].col(b);
      g.w_rec.noalias() += learning.asDiagonal() * state.recurrent();
      g.w_in.noalias() += learning.asDiagonal() * state.input();
      g.w_out.noalias() += dl_dy[ts].col(b) * trajectory.rates[ts].col(b).transpose();
      prev_h = trajectory.hidden[ts].col(b);
    }
  }
  if (params.sparsity_mask) g.w_rec = g.w_rec.cwiseProduct(*params.sparsity_mask);
  return g;
}

}  // namespace rulesim
