#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "rulesim/random.hpp"
#include "rulesim/rnn.hpp"
#include "rulesim/rules.hpp"

namespace testutil {

using namespace rulesim;

inline NetworkParams random_params(int n, int n_in, int n_out, Activation act, Seed seed, double noise = 0.0,
                                   double beta = 0.7) {
  NetworkConfig c;
  c.n_units = n;
  c.n_inputs = n_in;
  c.n_outputs = n_out;
  c.activation = act;
  c.noise_std = noise;
  c.dt = 1.0;
  c.tau_m = 1.0 / (1.0 - beta);
  c.gain = 1.2;
  NetworkParams p = init_params(c, seed);
  return p;
}

inline TrialBatch random_batch(int t_steps, int trials, int n_in, int n_out, LossKind loss, Seed seed,
                               int masked_tail = 0) {
  Rng rng(seed);
  TrialBatch b;
  b.loss = loss;
  for (int t = 0; t < t_steps; ++t) {
    Matrix x(n_in, trials);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = rng.uniform(-1.0, 1.5);
    b.inputs.push_back(x);
    if (loss == LossKind::mse) {
      Matrix y(n_out, trials);
      for (Eigen::Index j = 0; j < y.cols(); ++j)
        for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, j) = rng.uniform(-1.0, 1.0);
      b.targets.push_back(y);
    }
  }
  b.loss_mask = Matrix::Ones(t_steps, trials);
  if (masked_tail > 0) b.loss_mask.topRows(t_steps - masked_tail).setZero();
  if (loss == LossKind::cross_entropy) {
    for (int k = 0; k < trials; ++k) b.labels.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(n_out))));
  }
  for (int k = 0; k < trials; ++k) b.condition_ids.push_back(k);
  return b;
}

/// Five-point central difference of f at x along every coordinate of a matrix.
inline Matrix central_difference(Matrix& m, const std::function<long double()>& f, double h) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double x = m(i, j);
      m(i, j) = x + 2 * h;
      const long double f2 = f();
      m(i, j) = x + h;
      const long double f1 = f();
      m(i, j) = x - h;
      const long double g1 = f();
      m(i, j) = x - 2 * h;
      const long double g2 = f();
      m(i, j) = x;
      // Actual offsets after rounding x ± h to double.
      const long double step = (static_cast<long double>(x + h) - static_cast<long double>(x - h)) / 2;
      out(i, j) = static_cast<double>((-f2 + 8 * f1 - 8 * g1 + g2) / (12 * step));
    }
  }
  return out;
}

/// Largest |a - b| / max(|a|, |b|, floor) over entries.
inline double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double d = std::abs(a(i, j) - b(i, j));
      const double s = std::max({std::abs(a(i, j)), std::abs(b(i, j)), floor});
      worst = std::max(worst, d / s);
    }
  return worst;
}

/// Independent extended-precision forward pass and loss. Noise is redrawn
/// from Rng(noise_seed) step by step, trial-major and unit-minor.
inline long double reference_loss(const NetworkParams& p, const TrialBatch& b, Seed noise_seed) {
  using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const LMatrix w_in = p.w_in.cast<long double>(), w_rec = p.w_rec.cast<long double>(),
                w_out = p.w_out.cast<long double>();
  const long double beta = p.beta;
  const auto f = [&](long double x) -> long double {
    if (x <= 0) return 0;
    return p.activation == Activation::relu ? x : std::tanh(x);
  };
  Rng rng(noise_seed);
  const int n = p.n_units(), trials = b.n_trials();
  LMatrix h = LMatrix::Zero(n, trials);
  long double total = 0, masked = 0;
  for (int t = 0; t < b.n_steps(); ++t) {
    const LMatrix r = h.unaryExpr(f);
    h = beta * h + (1 - beta) * (w_rec * r + w_in * b.inputs[static_cast<std::size_t>(t)].cast<long double>());
    if (p.noise_std > 0.0)
      for (int k = 0; k < trials; ++k)
        for (int i = 0; i < n; ++i) h(i, k) += p.noise_std * rng.normal();
    const LMatrix y = w_out * h.unaryExpr(f);
    for (int k = 0; k < trials; ++k) {
      const long double m = b.loss_mask(t, k);
      if (m == 0) continue;
      masked += m;
      if (b.loss == LossKind::mse) {
        const LMatrix d = y.col(k) - b.targets[static_cast<std::size_t>(t)].col(k).cast<long double>();
        total += m * 0.5L * d.squaredNorm();
      } else {
        const long double top = y.col(k).maxCoeff();
        long double z = 0;
        for (int c = 0; c < y.rows(); ++c) z += std::exp(y(c, k) - top);
        total += m * (top + std::log(z) - y(b.labels[static_cast<std::size_t>(k)], k));
      }
    }
  }
  if (b.loss == LossKind::mse) masked *= p.n_outputs();
  return total / masked;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

/// Haar-random orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
inline Matrix random_orthogonal(Eigen::Index n, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(n, n, rng));
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR();
  for (Eigen::Index i = 0; i < n; ++i)
    if (r(i, i) < 0) q.col(i) *= -1.0;
  return q;
}

/// Angular distance of two-unit matrices by exhaustive search over O(2):
/// rotations on a grid of `step` radians, with and without a reflection.
inline double brute_force_two_unit(const Matrix& a, const Matrix& b, double step = 1e-4) {
  const Matrix ca = a.rowwise() - a.colwise().mean();
  const Matrix cb = b.rowwise() - b.colwise().mean();
  const Matrix m = cb.transpose() * ca;  // <A, B Q> = tr(Qᵀ Bᵀ A)
  const double scale = ca.norm() * cb.norm();
  double best = -1.0;
  const double two_pi = 8.0 * std::atan(1.0);
  for (double phi = 0.0; phi < two_pi; phi += step) {
    const double c = std::cos(phi), s = std::sin(phi);
    const double rot = c * (m(0, 0) + m(1, 1)) + s * (m(1, 0) - m(0, 1));
    const double refl = c * (m(0, 0) - m(1, 1)) + s * (m(1, 0) + m(0, 1));
    best = std::max({best, rot, refl});
  }
  return std::acos(std::clamp(best / scale, -1.0, 1.0));
}

inline double max_abs_diff(const GradientSet& a, const GradientSet& b) {
  return std::max({(a.w_in - b.w_in).cwiseAbs().maxCoeff(), (a.w_rec - b.w_rec).cwiseAbs().maxCoeff(),
                   (a.w_out - b.w_out).cwiseAbs().maxCoeff()});
}

inline bool bitwise_equal(const GradientSet& a, const GradientSet& b) {
  return a.w_in == b.w_in && a.w_rec == b.w_rec && a.w_out == b.w_out;
}

/// Smallest |h| over a trajectory; relu checks stay away from the kink.
inline double min_abs_state(const StateTrajectory& tr) {
  double m = INFINITY;
  for (const auto& h : tr.hidden) m = std::min(m, h.cwiseAbs().minCoeff());
  return m;
}

}  // namespace testutil
