#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace rulesim {

/// Scalar linear RNN with input x_1..x_T, zero target and readout at T:
///   ŷ(W) = Σ_{t=0}^{T-1} W^t x_{T-t}
/// coeffs[k] holds x_{k+1}, so coeffs.back() is the constant term and
/// coeffs[T-2] = x_{T-1} the linear one.
struct ToyProblem {
  std::vector<double> coeffs;
  double tau = 1.0;

  int length() const { return static_cast<int>(coeffs.size()); }
  /// x_{T-1}; throws DegenerateInputError when T < 2.
  double linear_coefficient() const;
};

enum class ToyRule { bptt, eprop };
enum class Verdict { converged, diverged, undecided };

std::string_view to_string(ToyRule rule);
std::string_view to_string(Verdict verdict);
ToyRule parse_toy_rule(std::string_view name);

struct Readout {
  double value = 0.0;
  double derivative = 0.0;
};

/// Horner evaluation of ŷ and ŷ'.
Readout poly_readout(const ToyProblem& problem, double w);

/// bptt: -ŷ ŷ'/tau;  eprop: -ŷ x_{T-1}/tau.
double flow_field(const ToyProblem& problem, double w, ToyRule rule);

/// d(eprop flow)/dW = -ŷ'(W) x_{T-1} / tau.
double eprop_jacobian(const ToyProblem& problem, double w);

struct IntegrationSettings {
  double dt = 1e-3;
  long max_steps = 1'000'000;
  double value_tol = 1e-10;
  double step_tol = 1e-12;
  double divergence_bound = 1e6;
  /// Radius around the endpoint inside which (W - W*)² must not increase.
  double lyapunov_radius = 1e-2;
  bool record_trajectory = true;
};

struct FlowResult {
  Verdict verdict = Verdict::undecided;
  double w_final = 0.0;
  long steps = 0;
  std::vector<double> trajectory;  // W at every step, starting with W0
  /// sign(ŷ'(W)) · sign(x_{T-1}) = -1 at every visited point.
  bool sign_hypothesis_held = true;
  bool derivative_sign_constant = true;
  /// Converged runs only; true otherwise.
  bool lyapunov_monotone = true;
  double final_jacobian = 0.0;
};

/// Classical RK4 on tau dW/dt = flow. Converged when |ŷ| < value_tol and
/// |ΔW| < step_tol; diverged when |W| exceeds the bound or turns non-finite.
/// The e-prop flow rejects x_{T-1} = 0 with DegenerateInputError.
FlowResult integrate_flow(const ToyProblem& problem, double w0, ToyRule rule, const IntegrationSettings& settings = {});

struct BasinPoint {
  double w0 = 0.0;
  FlowResult result;
};

std::vector<BasinPoint> basin_scan(const ToyProblem& problem, ToyRule rule, std::span<const double> w0_grid,
                                   IntegrationSettings settings = {});

/// Midpoints between neighbouring grid points whose outcome differs (verdict,
/// or limit point for converged runs).
std::vector<double> basin_boundaries(std::span<const BasinPoint> scan, double root_tol = 1e-6);

struct Showcase {
  ToyProblem problem;
  double w0 = 0.0;
  FlowResult result;
};

/// Scans every length-`length` coefficient vector over `values` (x_{T-1} ≠ 0)
/// and every W0 in `w0_grid`, in lexicographic order, returning the first
/// e-prop run whose verdict matches. A diverged showcase must also satisfy the
/// sign hypothesis with a constant derivative sign; a converged one must end
/// at a point with negative Jacobian.
std::optional<Showcase> find_showcase(Verdict wanted, int length, std::span<const double> values,
                                      std::span<const double> w0_grid, IntegrationSettings settings = {});

}  // namespace rulesim
