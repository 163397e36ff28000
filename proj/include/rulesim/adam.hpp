#pragma once

#include "rulesim/rnn.hpp"
#include "rulesim/rules.hpp"

namespace rulesim {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  long step = 0;
  Matrix m_in, v_in, m_rec, v_rec, m_out, v_out;

  static AdamState for_params(const NetworkParams& params, AdamHyper hyper = {});
};

/// One bias-corrected Adam update of a single tensor at step `step` (>= 1).
void adam_update(Matrix& param, Matrix& m, Matrix& v, const Matrix& grad, const AdamHyper& hyper, long step);

/// Updates all three weight tensors, then re-applies the Dale and sparsity masks.
void adam_step(AdamState& state, NetworkParams& params, const GradientSet& grads);

}  // namespace rulesim
