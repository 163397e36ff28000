#pragma once

#include "rulesim/rnn.hpp"
#include "rulesim/rules.hpp"

namespace rulesim {

/// Eligibility traces of one trial for every input and recurrent synapse.
///   e_{ij,t} = ∂h_{i,t}/∂W_ij + (∂h_{i,t}/∂h_{i,t-1}) e_{ij,t-1},   e_{ij,-1} = 0
/// Only the self-dependence of the postsynaptic unit is kept.
class EligibilityState {
 public:
  EligibilityState(int n_units, int n_inputs);

  /// self_factor_i = ∂h_{i,t}/∂h_{i,t-1}; pre_* are the immediate partials
  /// ∂h_{i,t}/∂W_ij, which do not depend on i.
  void advance(const Vector& self_factor, const Vector& pre_recurrent, const Vector& pre_input);
  void reset();

  const Matrix& recurrent() const { return recurrent_; }
  const Matrix& input() const { return input_; }
  int step() const { return step_; }

 private:
  Matrix recurrent_;  // N × N
  Matrix input_;      // N × N_in
  int step_ = 0;
};

/// Forward-in-time e-prop: one EligibilityState per trial, Σ_t I_t ⊙ e_t
/// accumulated online. Mathematically identical to three_factor_gradient.
GradientSet eprop_gradient_online(const NetworkParams& params, const TrialBatch& batch,
                                  const StateTrajectory& trajectory, const Sequence& dl_dy, const Sequence& signal);

}  // namespace rulesim
