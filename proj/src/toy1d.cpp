#include "rulesim/toy1d.hpp"

#include <cmath>
#include <string>

#include "rulesim/errors.hpp"

namespace rulesim {

double ToyProblem::linear_coefficient() const {
  if (coeffs.size() < 2) throw DegenerateInputError("toy problem needs T >= 2 for x_{T-1}");
  return coeffs[coeffs.size() - 2];
}

std::string_view to_string(ToyRule rule) { return rule == ToyRule::bptt ? "bptt" : "eprop"; }

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::converged: return "converged";
    case Verdict::diverged: return "diverged";
    case Verdict::undecided: return "undecided";
  }
  return "unknown";
}

ToyRule parse_toy_rule(std::string_view name) {
  if (name == "bptt") return ToyRule::bptt;
  if (name == "eprop" || name == "e-prop") return ToyRule::eprop;
  throw ConfigError("toy rule must be bptt or eprop, got '" + std::string(name) + "'");
}

Readout poly_readout(const ToyProblem& problem, double w) {
  // coeffs[0] = x_1 multiplies the highest power W^{T-1}.
  Readout r;
  for (double x : problem.coeffs) {
    r.derivative = r.derivative * w + r.value;
    r.value = r.value * w + x;
  }
  return r;
}

double flow_field(const ToyProblem& problem, double w, ToyRule rule) {
  const Readout r = poly_readout(problem, w);
  const double direction = rule == ToyRule::bptt ? r.derivative : problem.linear_coefficient();
  return -r.value * direction / problem.tau;
}

double eprop_jacobian(const ToyProblem& problem, double w) {
  return -poly_readout(problem, w).derivative * problem.linear_coefficient() / problem.tau;
}

namespace {

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

FlowResult integrate_flow(const ToyProblem& problem, double w0, ToyRule rule, const IntegrationSettings& settings) {
  if (!(settings.dt > 0.0)) throw ConfigError("integration dt must be positive");
  if (!(problem.tau > 0.0)) throw ConfigError("tau must be positive");
  if (rule == ToyRule::eprop && problem.linear_coefficient() == 0.0) {
    throw DegenerateInputError("x_{T-1} = 0 makes the e-prop flow vanish identically");
  }
  const double x_lin = problem.coeffs.size() >= 2 ? problem.linear_coefficient() : 0.0;
  const double dt = settings.dt;
  const auto f = [&](double w) { return flow_field(problem, w, rule); };

  FlowResult out;
  if (settings.record_trajectory) out.trajectory.push_back(w0);
  const int first_sign = sign_of(poly_readout(problem, w0).derivative);
  const auto observe = [&](double w) {
    const int s = sign_of(poly_readout(problem, w).derivative);
    if (s * sign_of(x_lin) != -1) out.sign_hypothesis_held = false;
    if (s != first_sign) out.derivative_sign_constant = false;
  };
  observe(w0);

  double w = w0;
  const bool at_rest = std::abs(poly_readout(problem, w0).value) < settings.value_tol &&
                       std::abs(dt * f(w0)) < settings.step_tol;
  if (at_rest) out.verdict = Verdict::converged;
  for (long step = 1; !at_rest && step <= settings.max_steps; ++step) {
    const double k1 = f(w);
    const double k2 = f(w + 0.5 * dt * k1);
    const double k3 = f(w + 0.5 * dt * k2);
    const double k4 = f(w + dt * k3);
    const double next = w + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out.steps = step;
    if (!std::isfinite(next) || std::abs(next) > settings.divergence_bound) {
      out.verdict = Verdict::diverged;
      w = next;
      break;
    }
    const double delta = next - w;
    w = next;
    if (settings.record_trajectory) out.trajectory.push_back(w);
    observe(w);
    if (std::abs(poly_readout(problem, w).value) < settings.value_tol && std::abs(delta) < settings.step_tol) {
      out.verdict = Verdict::converged;
      break;
    }
  }
  out.w_final = w;
  if (std::isfinite(w)) out.final_jacobian = eprop_jacobian(problem, w);

  if (out.verdict == Verdict::converged && settings.record_trajectory) {
    double previous = -1.0;
    for (double v : out.trajectory) {
      const double gap = (v - w) * (v - w);
      if (std::abs(v - w) >= settings.lyapunov_radius && previous < 0.0) continue;
      if (previous >= 0.0 && gap > previous) {
        out.lyapunov_monotone = false;
        break;
      }
      previous = gap;
    }
  }
  return out;
}

std::vector<BasinPoint> basin_scan(const ToyProblem& problem, ToyRule rule, std::span<const double> w0_grid,
                                   IntegrationSettings settings) {
  settings.record_trajectory = false;
  std::vector<BasinPoint> out;
  out.reserve(w0_grid.size());
  for (double w0 : w0_grid) out.push_back({w0, integrate_flow(problem, w0, rule, settings)});
  return out;
}

std::vector<double> basin_boundaries(std::span<const BasinPoint> scan, double root_tol) {
  std::vector<double> out;
  for (std::size_t k = 1; k < scan.size(); ++k) {
    const FlowResult& a = scan[k - 1].result;
    const FlowResult& b = scan[k].result;
    bool differs = a.verdict != b.verdict;
    if (!differs && a.verdict == Verdict::converged) differs = std::abs(a.w_final - b.w_final) > root_tol;
    if (differs) out.push_back(0.5 * (scan[k - 1].w0 + scan[k].w0));
  }
  return out;
}

std::optional<Showcase> find_showcase(Verdict wanted, int length, std::span<const double> values,
                                      std::span<const double> w0_grid, IntegrationSettings settings) {
  if (length < 2) throw ConfigError("showcase scan needs T >= 2");
  if (values.empty() || w0_grid.empty()) return std::nullopt;
  std::vector<std::size_t> index(static_cast<std::size_t>(length), 0);
  const std::size_t base = values.size();
  while (true) {
    ToyProblem problem;
    for (std::size_t k : index) problem.coeffs.push_back(values[k]);
    if (problem.linear_coefficient() != 0.0) {
      for (double w0 : w0_grid) {
        FlowResult r = integrate_flow(problem, w0, ToyRule::eprop, settings);
        if (r.verdict != wanted) continue;
        if (wanted == Verdict::diverged && !(r.sign_hypothesis_held && r.derivative_sign_constant)) continue;
        if (wanted == Verdict::converged && !(r.final_jacobian < 0.0)) continue;
        return Showcase{problem, w0, std::move(r)};
      }
    }
    std::size_t pos = index.size();
    while (pos > 0) {
      --pos;
      if (++index[pos] < base) break;
      index[pos] = 0;
      if (pos == 0) return std::nullopt;
    }
  }
}

}  // namespace rulesim
