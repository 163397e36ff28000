#include <doctest.h>

#include <cmath>
#include <vector>

#include "rulesim/errors.hpp"
#include "rulesim/random.hpp"
#include "rulesim/toy1d.hpp"

using namespace rulesim;

namespace {

// Direct power sums, independent of the Horner evaluation.
double direct_value(const ToyProblem& p, double w) {
  const int t_len = p.length();
  double sum = 0.0;
  for (int t = 0; t < t_len; ++t) sum += std::pow(w, t) * p.coeffs[static_cast<std::size_t>(t_len - 1 - t)];
  return sum;
}

double direct_derivative(const ToyProblem& p, double w) {
  const int t_len = p.length();
  double sum = 0.0;
  for (int t = 1; t < t_len; ++t) sum += t * std::pow(w, t - 1) * p.coeffs[static_cast<std::size_t>(t_len - 1 - t)];
  return sum;
}

ToyProblem random_problem(Rng& rng) {
  ToyProblem p;
  const int len = 2 + static_cast<int>(rng.below(5));
  for (int k = 0; k < len; ++k) p.coeffs.push_back(rng.uniform(-1.0, 1.0));
  p.tau = rng.uniform(0.5, 2.0);
  return p;
}

}  // namespace

TEST_CASE("readout polynomial") {
  const ToyProblem p{{1.0, -0.5}, 1.0};
  CHECK(poly_readout(p, 0.5).value == 0.0);
  CHECK(poly_readout(p, 0.3).derivative == 1.0);
  CHECK(poly_readout(p, 2.0).value == 1.5);
  CHECK(p.linear_coefficient() == 1.0);

  const ToyProblem zeros{{0.0, 0.0, 0.0}, 1.0};
  CHECK(poly_readout(zeros, 1.7).value == 0.0);

  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    const ToyProblem q = random_problem(rng);
    const double w = rng.uniform(-2.0, 2.0);
    CHECK(std::abs(poly_readout(q, w).value - direct_value(q, w)) < 1e-12);
    CHECK(std::abs(poly_readout(q, w).derivative - direct_derivative(q, w)) < 1e-12);
    CHECK(poly_readout(q, 0.0).value == q.coeffs.back());
  }
  const ToyProblem constant{{1.0}, 1.0};
  CHECK_THROWS_AS(constant.linear_coefficient(), DegenerateInputError);
}

TEST_CASE("flow fields and the e-prop Jacobian") {
  const ToyProblem p{{1.0, -0.5}, 1.0};
  CHECK(flow_field(p, 1.0, ToyRule::bptt) == -0.5);
  CHECK(flow_field(p, 1.0, ToyRule::eprop) == -0.5);
  CHECK(flow_field(p, 0.5, ToyRule::bptt) == 0.0);
  CHECK(flow_field(p, 0.5, ToyRule::eprop) == 0.0);

  const ToyProblem roots{{1.0, 0.0, -1.0}, 1.0};  // W² - 1
  for (double r : {-1.0, 1.0}) {
    CHECK(flow_field(roots, r, ToyRule::bptt) == 0.0);
  }

  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const ToyProblem q = random_problem(rng);
    const double w = rng.uniform(-2.0, 2.0);
    const double yx = direct_value(q, w) * q.linear_coefficient();
    const double f = flow_field(q, w, ToyRule::eprop);
    CHECK((f > 0) == (yx < 0));
    CHECK((f < 0) == (yx > 0));

    const double h = 1e-5;
    const double fd = (flow_field(q, w + h, ToyRule::eprop) - flow_field(q, w - h, ToyRule::eprop)) / (2 * h);
    const double j = eprop_jacobian(q, w);
    CHECK(std::abs(fd - j) <= 1e-8 * std::max(std::abs(j), 1e-3));
  }
  CHECK(eprop_jacobian(p, 0.5) < 0.0);
  CHECK(eprop_jacobian(ToyProblem{{1.0, 0.0, 2.0}, 1.0}, 0.7) == 0.0);
}

TEST_CASE("integrate_flow: favourable e-prop instance converges to the root") {
  const ToyProblem p{{1.0, -0.5}, 1.0};
  const FlowResult r = integrate_flow(p, 0.0, ToyRule::eprop);
  CHECK(r.verdict == Verdict::converged);
  CHECK(std::abs(r.w_final - 0.5) < 1e-6);
  CHECK(std::abs(direct_value(p, r.w_final)) < 1e-10);
  CHECK(r.final_jacobian < 0.0);
  CHECK(r.lyapunov_monotone);
  CHECK(r.trajectory.front() == 0.0);
  CHECK(static_cast<long>(r.trajectory.size()) == r.steps + 1);
  for (std::size_t k = 1; k < r.trajectory.size(); ++k) {
    CHECK(std::abs(r.trajectory[k] - 0.5) <= std::abs(r.trajectory[k - 1] - 0.5));
  }
}

TEST_CASE("integrate_flow: bptt converges near a real root") {
  const ToyProblem p{{1.0, 0.3, -1.0}, 1.0};
  const double root = (-0.3 + std::sqrt(0.09 + 4.0)) / 2.0;
  const FlowResult r = integrate_flow(p, root + 0.2, ToyRule::bptt);
  CHECK(r.verdict == Verdict::converged);
  CHECK(std::abs(r.w_final - root) < 1e-6);
}

TEST_CASE("integrate_flow: adverse-sign showcase diverges under the sign hypothesis") {
  const std::vector<double> values{-1.0, -0.5, 0.5, 1.0};
  const std::vector<double> w0s{-1.0, 0.0, 1.0};
  const auto show = find_showcase(Verdict::diverged, 3, values, w0s);
  REQUIRE(show);
  const FlowResult& r = show->result;
  CHECK(r.verdict == Verdict::diverged);
  CHECK(r.sign_hypothesis_held);
  CHECK(r.derivative_sign_constant);
  const double x = show->problem.linear_coefficient();
  for (double w : r.trajectory) {
    if (!std::isfinite(w) || std::abs(w) > 1e6) continue;
    CHECK(direct_derivative(show->problem, w) * x < 0.0);
  }
  const FlowResult again = integrate_flow(show->problem, show->w0, ToyRule::eprop);
  CHECK(again.verdict == Verdict::diverged);
  CHECK(again.trajectory == r.trajectory);

  const auto good = find_showcase(Verdict::converged, 3, values, w0s);
  REQUIRE(good);
  CHECK(good->result.final_jacobian < 0.0);
  CHECK(std::abs(poly_readout(good->problem, good->result.w_final).value) < 1e-10);
}

TEST_CASE("integrate_flow: degenerate and invalid settings") {
  const ToyProblem flat{{0.0, 1.0}, 1.0}, ok{{1.0, 1.0}, 1.0};
  CHECK_THROWS_AS(integrate_flow(flat, 0.0, ToyRule::eprop), DegenerateInputError);
  IntegrationSettings bad;
  bad.dt = 0.0;
  CHECK_THROWS_AS(integrate_flow(ok, 0.0, ToyRule::eprop, bad), ConfigError);
  IntegrationSettings short_budget;
  short_budget.max_steps = 10;
  CHECK(integrate_flow(ToyProblem{{1.0, -0.5}, 1.0}, 0.0, ToyRule::eprop, short_budget).verdict == Verdict::undecided);
}

TEST_CASE("basin scan") {
  const ToyProblem p{{1.0, -0.5}, 1.0};
  std::vector<double> grid;
  for (double w = -3.0; w <= 3.0 + 1e-12; w += 0.5) grid.push_back(w);
  const auto scan = basin_scan(p, ToyRule::eprop, grid);
  REQUIRE(scan.size() == grid.size());
  for (const auto& pt : scan) {
    CHECK(pt.result.verdict == Verdict::converged);
    CHECK(pt.result.final_jacobian < 0.0);
  }
  CHECK(basin_boundaries(scan).empty());
  const BasinPoint& at_root = scan[7];
  CHECK(at_root.w0 == 0.5);
  CHECK(at_root.result.steps == 0);

  const ToyProblem two{{1.0, 0.0, -1.0}, 1.0};
  const std::vector<double> g2{-2.0, -1.5, -0.5, 0.5, 1.5, 2.0};
  const auto scan2 = basin_scan(two, ToyRule::bptt, g2);
  for (const auto& pt : scan2) CHECK(pt.result.verdict == Verdict::converged);
  const auto cuts = basin_boundaries(scan2);
  REQUIRE(cuts.size() == 1);
  CHECK(cuts[0] == 0.0);
}
