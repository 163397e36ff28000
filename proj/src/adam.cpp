#include "rulesim/adam.hpp"

#include <cmath>

#include "rulesim/errors.hpp"

namespace rulesim {

AdamState AdamState::for_params(const NetworkParams& params, AdamHyper hyper) {
  AdamState s;
  s.hyper = hyper;
  s.m_in = s.v_in = Matrix::Zero(params.w_in.rows(), params.w_in.cols());
  s.m_rec = s.v_rec = Matrix::Zero(params.w_rec.rows(), params.w_rec.cols());
  s.m_out = s.v_out = Matrix::Zero(params.w_out.rows(), params.w_out.cols());
  return s;
}

void adam_update(Matrix& param, Matrix& m, Matrix& v, const Matrix& grad, const AdamHyper& hyper, long step) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) throw ShapeError("gradient and parameter shapes differ");
  if (step < 1) throw ConfigError("Adam step count starts at 1");
  m = hyper.beta1 * m + (1.0 - hyper.beta1) * grad;
  v = hyper.beta2 * v + (1.0 - hyper.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  param.array() -= hyper.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + hyper.eps);
}

void adam_step(AdamState& state, NetworkParams& params, const GradientSet& grads) {
  ++state.step;
  adam_update(params.w_in, state.m_in, state.v_in, grads.w_in, state.hyper, state.step);
  adam_update(params.w_rec, state.m_rec, state.v_rec, grads.w_rec, state.hyper, state.step);
  adam_update(params.w_out, state.m_out, state.v_out, grads.w_out, state.hyper, state.step);
  params.apply_masks();
}

}  // namespace rulesim
