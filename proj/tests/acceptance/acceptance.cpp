// Acceptance checks 1-10. Each prints indented measurements followed by one
// PASS/FAIL line; the exit status is nonzero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "../unit/helpers.hpp"
#include "rulesim/config.hpp"
#include "rulesim/response_matrix.hpp"
#include "rulesim/rules.hpp"
#include "rulesim/similarity.hpp"
#include "rulesim/tasks.hpp"
#include "rulesim/toy1d.hpp"
#include "rulesim/training.hpp"

using namespace rulesim;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Collects failed expectations of one criterion.
struct Outcome {
  bool ok = true;
  std::vector<std::string> failures;

  void expect(bool cond, const std::string& what) {
    if (cond) return;
    ok = false;
    if (failures.size() < 8) failures.push_back(what);
  }
};

[[gnu::format(printf, 1, 2)]] void note(const char* format, ...) {
  std::va_list args;
  va_start(args, format);
  std::printf("    ");
  std::vprintf(format, args);
  std::printf("\n");
  va_end(args);
  std::fflush(stdout);
}

int g_failed = 0;

void report(int id, const char* name, Outcome v, double elapsed, double budget) {
  v.expect(elapsed < budget, "runtime " + std::to_string(elapsed) + " s exceeds " + std::to_string(budget) + " s");
  for (const auto& f : v.failures) note("failed: %s", f.c_str());
  std::printf("%s criterion %d (%s): %.1f s of %.0f s budget\n", v.ok ? "PASS" : "FAIL", id, name, elapsed, budget);
  std::fflush(stdout);
  if (!v.ok) ++g_failed;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  Outcome v;
  double worst = 0.0;
  int checked_total = 0;
  for (LossKind loss : {LossKind::mse, LossKind::cross_entropy}) {
    for (Activation act : {Activation::retanh, Activation::relu}) {
      int checked = 0;
      for (Seed seed = 1; checked < 3 && seed < 30; ++seed) {
        NetworkParams p = random_params(10, 3, 3, act, seed, 0.05);
        const TrialBatch b = random_batch(20, 2, 3, 3, loss, seed + 100, seed % 2 ? 5 : 0);
        const Seed noise = 17;
        if (min_abs_state(rnn_forward(p, b, noise)) < 1e-3) continue;
        ++checked;
        const GradientSet g = bptt_gradient(p, b, noise);
        const auto loss_fn = [&]() { return reference_loss(p, b, noise); };
        for (auto [fd, exact] : {std::pair{central_difference(p.w_in, loss_fn, 1e-5), &g.w_in},
                                 std::pair{central_difference(p.w_rec, loss_fn, 1e-5), &g.w_rec},
                                 std::pair{central_difference(p.w_out, loss_fn, 1e-5), &g.w_out}}) {
          const double err = max_relative_error(fd, *exact);
          worst = std::max(worst, err);
          v.expect(err < 1e-6, std::string(to_string(loss)) + "/" + std::string(to_string(act)) + " seed " +
                                   std::to_string(seed) + " relative error " + fmt(err));
        }
      }
      v.expect(checked == 3, "too few usable seeds");
      checked_total += checked;
    }
  }
  note("%d networks (N=10, T=20), worst per-entry relative error %.2e (bound 1e-6)", checked_total, worst);
  return v;
}

Outcome truncation_identities() {
  Outcome v;
  double full = 0.0, diag_err = 0.0;
  bool t1 = true;
  for (Activation act : {Activation::retanh, Activation::relu}) {
    for (Seed seed : {5, 6, 7}) {
      NetworkParams p = random_params(8, 2, 2, act, seed, 0.05);
      const TrialBatch b = random_batch(15, 3, 2, 2, LossKind::mse, seed + 10);
      const GradientSet exact = bptt_gradient(p, b, 9);
      full = std::max(full, max_abs_diff(truncated_bptt_gradient(p, b, 9, 15), exact));

      NetworkParams diag = p;
      diag.w_rec = Matrix(p.w_rec.diagonal().asDiagonal());
      diag_err = std::max(diag_err, max_abs_diff(eprop_gradient(diag, b, 9), bptt_gradient(diag, b, 9)));

      const TrialBatch one = random_batch(1, 3, 2, 2, LossKind::mse, seed + 20);
      t1 = t1 && bitwise_equal(eprop_gradient(p, one, 9), bptt_gradient(p, one, 9));
    }
  }
  note("K=T vs BPTT %.2e (bound 1e-12); diagonal W e-prop vs BPTT %.2e (bound 1e-10); T=1 exact: %s", full,
       diag_err, t1 ? "yes" : "no");
  v.expect(full < 1e-12, "K=T deviation " + fmt(full));
  v.expect(diag_err < 1e-10, "diagonal deviation " + fmt(diag_err));
  v.expect(t1, "T=1 gradients differ");
  return v;
}

Outcome procrustes_suite() {
  Outcome v;
  Rng rng(4);
  double sym = 0.0, tri = -INFINITY, orth = 0.0, scale = 0.0, self = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Matrix a = random_matrix(12, 4, rng), b = random_matrix(12, 4, rng);
    Matrix c = random_matrix(12, 4, rng);
    if (k % 3 == 0) c = 0.3 * a + 0.7 * c;
    const double ab = procrustes_distance(a, b);
    sym = std::max(sym, std::abs(ab - procrustes_distance(b, a)));
    tri = std::max(tri, procrustes_distance(a, c) - ab - procrustes_distance(b, c));
    const Matrix r = random_orthogonal(4, rng), s = random_orthogonal(4, rng);
    orth = std::max(orth, std::abs(procrustes_distance(a * r, b * s) - ab));
    scale = std::max(scale, std::abs(procrustes_distance(2.5 * a, 0.1 * b) - ab));
    self = std::max(self, procrustes_distance(a, a));
  }
  double oracle = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Matrix a = random_matrix(8, 2, rng), b = random_matrix(8, 2, rng);
    oracle = std::max(oracle, std::abs(procrustes_distance(a, b) - brute_force_two_unit(a, b)));
  }
  note("1000 triples: symmetry %.1e, triangle excess %.1e, rotation %.1e, scale %.1e, self %.1e", sym, tri, orth,
       scale, self);
  note("50 two-unit pairs: max gap to the O(2) grid search %.1e rad (bound 1e-3)", oracle);
  v.expect(sym < 1e-8, "symmetry " + fmt(sym));
  v.expect(tri < 1e-8, "triangle " + fmt(tri));
  v.expect(orth < 1e-8, "orthogonal invariance " + fmt(orth));
  v.expect(scale < 1e-8, "scale invariance " + fmt(scale));
  v.expect(self == 0.0, "self distance " + fmt(self));
  v.expect(oracle < 1e-3, "two-unit oracle " + fmt(oracle));
  return v;
}

// ---------------------------------------------------------------------------
// Desk-scale training shared by checks 4-6.

constexpr Seed kSeeds[] = {1, 2, 3, 4};
constexpr Seed kReferenceSeed = 1000;

ExperimentConfig reach_config(Rule rule, double gain, Seed seed) {
  ExperimentConfig c = default_config(TaskKind::reach_emg);
  c.network.n_units = 128;
  c.network.gain = gain;
  c.training.iterations = 1500;
  c.training.lr = 1e-3;
  c.training.batch_size = 16;
  c.training.eval_every = 50;
  c.training.seed = seed;
  c.rule.rule = rule;
  return c;
}

ExperimentConfig context_config(Rule rule, Seed seed) {
  ExperimentConfig c = default_config(TaskKind::context_integration);
  c.network.n_units = 128;
  c.training.iterations = 2000;
  c.training.lr = 1e-3;
  c.training.batch_size = 64;
  c.training.eval_every = 100;
  c.training.seed = seed;
  c.rule.rule = rule;
  return c;
}

struct Runs {
  ResponseMatrix reference;
  double reference_seconds = 0.0;
  std::vector<TrainingTrace> reach_bptt, reach_eprop, context_bptt, context_eprop;
};

Outcome training_smoke(Runs& runs) {
  Outcome v;
  for (Seed s : kSeeds) {
    runs.reach_bptt.push_back(run_training(reach_config(Rule::bptt, 1.0, s), &runs.reference).trace);
    runs.reach_eprop.push_back(run_training(reach_config(Rule::eprop, 1.0, s), &runs.reference).trace);
    runs.context_bptt.push_back(run_training(context_config(Rule::bptt, s)).trace);
    runs.context_eprop.push_back(run_training(context_config(Rule::eprop, s)).trace);
  }
  const auto tally = [&](const char* label, const std::vector<TrainingTrace>& traces) {
    int passing = 0;
    std::string accs;
    for (const auto& t : traces) {
      const double a = t.rows.back().accuracy;
      passing += a >= 0.7;
      accs += " " + fmt(a);
    }
    note("%-14s final accuracy per seed:%s (%d of 4 >= 0.7)", label, accs.c_str(), passing);
    v.expect(passing >= 3, std::string(label) + " reached 0.7 on " + std::to_string(passing) + " seeds");
  };
  tally("reach bptt", runs.reach_bptt);
  tally("reach e-prop", runs.reach_eprop);
  tally("context bptt", runs.context_bptt);
  tally("context e-prop", runs.context_eprop);
  return v;
}

Outcome trained_closer(const Runs& runs) {
  Outcome v;
  const auto per_rule = [&](const char* label, const std::vector<TrainingTrace>& traces) {
    std::string drops;
    for (const auto& t : traces) {
      const auto& first = t.rows.front().procrustes;
      const auto& last = t.rows.back().procrustes;
      if (!first || !last) {
        v.expect(false, std::string(label) + " trace lacks distances");
        continue;
      }
      const double drop = *first - *last;
      drops += " " + fmt(*first) + "->" + fmt(*last);
      v.expect(drop >= 0.05, std::string(label) + " seed " + std::to_string(t.rows.front().seed) + " moved only " +
                                 fmt(drop) + " rad");
    }
    note("%-12s untrained->trained distance per seed:%s", label, drops.c_str());
  };
  per_rule("reach bptt", runs.reach_bptt);
  per_rule("reach e-prop", runs.reach_eprop);
  return v;
}

std::optional<double> mean_matched(const char* label, const std::vector<TrainingTrace>& traces) {
  double sum = 0.0;
  int n = 0;
  std::string each;
  for (const auto& t : traces) {
    const auto d = distance_at_accuracy(t, 0.8);
    each += " " + (d ? fmt(*d) : std::string("unreached"));
    if (d) {
      sum += *d;
      ++n;
    }
  }
  note("%-18s distance at accuracy 0.8 per seed:%s", label, each.c_str());
  if (n == 0) return std::nullopt;
  return sum / n;
}

Outcome rule_vs_gain(const Runs& runs) {
  Outcome v;
  std::vector<TrainingTrace> lazy;
  for (Seed s : kSeeds) lazy.push_back(run_training(reach_config(Rule::bptt, 0.0, s), &runs.reference).trace);
  const auto bptt = mean_matched("bptt gain 1", runs.reach_bptt);
  const auto eprop = mean_matched("e-prop gain 1", runs.reach_eprop);
  const auto zero = mean_matched("bptt gain 0", lazy);
  if (!bptt || !eprop || !zero) {
    v.expect(false, "some configuration never reached accuracy 0.8");
    return v;
  }
  const double rule_gap = std::abs(*eprop - *bptt), gain_gap = std::abs(*bptt - *zero);
  note("|e-prop - bptt| = %.4f rad, |gain 1 - gain 0| = %.4f rad", rule_gap, gain_gap);
  v.expect(rule_gap < gain_gap, "rule gap " + fmt(rule_gap) + " not below gain gap " + fmt(gain_gap));
  return v;
}

// ---------------------------------------------------------------------------

Outcome estimators() {
  Outcome v;
  {
    NetworkParams p = random_params(4, 2, 1, Activation::relu, 8);
    p.w_in = p.w_in.cwiseAbs().array() + 0.5;
    p.w_rec.setZero();
    p.w_out << 0.5, -0.4, 0.6, 0.45;
    TrialBatch b = random_batch(3, 1, 2, 1, LossKind::mse, 9);
    for (auto& x : b.inputs) x = x.cwiseAbs().array() + 0.5;
    for (auto& y : b.targets) y.setConstant(-1.0);
    const StateTrajectory traj = rnn_forward(p, b, 0);
    const LossSignal truth = loss_and_signal(p, traj, b);
    Rng rng(77);
    const int draws = 100000;
    Sequence mean;
    for (const auto& h : traj.hidden) mean.push_back(Matrix::Zero(h.rows(), h.cols()));
    for (int k = 0; k < draws; ++k) {
      const Sequence est = node_perturbation_signal(p, b, traj, 1e-3, rng);
      for (std::size_t t = 0; t < est.size(); ++t) mean[t] += est[t] / draws;
    }
    double worst = 0.0;
    for (std::size_t t = 0; t < mean.size(); ++t) {
      const Matrix& exact = truth.dl_dh[t];
      for (Eigen::Index i = 0; i < exact.size(); ++i)
        worst = std::max(worst, std::abs(mean[t](i) - exact(i)) / std::abs(exact(i)));
    }
    note("node perturbation, 1e5 draws: worst relative bias of the signal %.4f (bound 0.05)", worst);
    v.expect(worst < 0.05, "node perturbation bias " + fmt(worst));
  }
  {
    Matrix a(3, 3);
    a << 2.0, 0.3, 0.0, 0.3, 1.0, -0.2, 0.0, -0.2, 1.5;
    Vector lin(3), x(3);
    lin << 1.0, -1.0, 0.5;
    x << 0.5, 0.3, -0.2;
    const auto f = [&](const Vector& w) { return 0.5 * w.dot(a * w) + lin.dot(w); };
    const Vector truth = a * x + lin;
    Rng rng(3);
    const Vector est = es_estimate(f, x, 0.05, 10000, rng);
    const double cosine = est.dot(truth) / (est.norm() * truth.norm());
    note("evolution strategies, S=1e4: cosine with the exact gradient %.4f (bound 0.9)", cosine);
    v.expect(cosine > 0.9, "ES cosine " + fmt(cosine));
  }
  return v;
}

double direct_value(const ToyProblem& p, double w) {
  const int n = p.length();
  double sum = 0.0;
  for (int t = 0; t < n; ++t) sum += std::pow(w, t) * p.coeffs[static_cast<std::size_t>(n - 1 - t)];
  return sum;
}

double direct_derivative(const ToyProblem& p, double w) {
  const int n = p.length();
  double sum = 0.0;
  for (int t = 1; t < n; ++t) sum += t * std::pow(w, t - 1) * p.coeffs[static_cast<std::size_t>(n - 1 - t)];
  return sum;
}

Outcome scalar_flow() {
  Outcome v;
  const ToyProblem good{{1.0, -0.5}, 1.0};
  const FlowResult r = integrate_flow(good, 0.0, ToyRule::eprop);
  const double residual = std::abs(direct_value(good, r.w_final));
  bool monotone = true;
  for (std::size_t k = 1; k < r.trajectory.size(); ++k)
    monotone = monotone && std::abs(direct_value(good, r.trajectory[k])) <=
                               std::abs(direct_value(good, r.trajectory[k - 1])) + 1e-15;
  note("favourable instance: %s after %ld steps, |y| = %.1e, J = %.3f, Lyapunov monotone: %s",
       std::string(to_string(r.verdict)).c_str(), r.steps, residual, r.final_jacobian,
       monotone && r.lyapunov_monotone ? "yes" : "no");
  v.expect(r.verdict == rulesim::Verdict::converged, "favourable instance did not converge");
  v.expect(residual < 1e-10, "terminal residual " + fmt(residual));
  v.expect(r.final_jacobian < 0.0, "terminal Jacobian not negative");
  v.expect(monotone && r.lyapunov_monotone, "Lyapunov function increased");

  const std::vector<double> values{-1.0, -0.5, 0.5, 1.0}, starts{-1.0, 0.0, 1.0};
  const auto show = find_showcase(rulesim::Verdict::diverged, 3, values, starts);
  if (!show) {
    v.expect(false, "no adverse-sign instance found");
    return v;
  }
  const FlowResult& d = show->result;
  const double x = show->problem.linear_coefficient();
  int verified = 0;
  bool held = true;
  for (double w : d.trajectory) {
    if (!std::isfinite(w)) break;
    held = held && direct_derivative(show->problem, w) * x < 0.0;
    ++verified;
  }
  note("adverse instance: %s after %ld steps, sign hypothesis checked on %d states: %s",
       std::string(to_string(d.verdict)).c_str(), d.steps, verified, held ? "held" : "violated");
  v.expect(d.verdict == rulesim::Verdict::diverged, "adverse instance did not diverge");
  v.expect(held && d.sign_hypothesis_held, "sign hypothesis violated");
  return v;
}

Outcome trial_averaging() {
  Outcome v;
  const int conditions = 6, steps = 30;
  const ResponseMatrix templ = surrogate_population(conditions, steps, 60, 4, 21);
  Rng rng(8);
  const auto averaged = [&](int k) {
    std::vector<ResponseMatrix> trials;
    std::vector<int> ids;
    for (int c = 0; c < conditions; ++c) {
      const ResponseMatrix one = make_response(templ.data.middleRows(c * steps, steps), 1, steps);
      for (int r = 0; r < k; ++r) {
        trials.push_back(noisy_trial(one, 0.5, rng));
        ids.push_back(c);
      }
    }
    return trial_average(trials, ids);
  };
  double previous = INFINITY;
  std::string seq;
  for (int k : {1, 5, 10, 20}) {
    const double d = procrustes_distance(averaged(k), averaged(k));
    seq += " " + std::to_string(k) + ":" + fmt(d);
    v.expect(d < previous, "distance did not decrease at k=" + std::to_string(k));
    previous = d;
  }
  note("data-data distance by trials averaged:%s", seq.c_str());
  return v;
}

std::string trace_bytes(const TrainingTrace& t) {
  std::ostringstream out;
  write_trace_csv(out, t);
  return out.str();
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  Outcome v;
  ExperimentConfig c = default_config(TaskKind::reach_emg);
  c.network.n_units = 24;
  c.training.batch_size = 4;
  c.training.iterations = 30;
  c.training.eval_every = 10;
  const ResponseMatrix reference = evaluation_responses(init_params(c.network, 77), c);
  for (Rule rule : {Rule::bptt, Rule::eprop, Rule::node_perturbation}) {
    c.rule.rule = rule;
    const std::string a = trace_bytes(run_training(c, &reference).trace);
    const std::string b = trace_bytes(run_training(c, &reference).trace);
    v.expect(a == b, std::string(to_string(rule)) + " traces differ");
  }
  ExperimentConfig ctx = default_config(TaskKind::context_integration);
  ctx.network.n_units = 16;
  ctx.training.batch_size = 4;
  ctx.training.iterations = 20;
  ctx.training.eval_every = 10;
  v.expect(trace_bytes(run_training(ctx).trace) == trace_bytes(run_training(ctx).trace), "context traces differ");

  const fs::path dir = fs::temp_directory_path() / ("rulesim_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  Rng rng(9);
  for (int k = 0; k < 5; ++k) {
    ResponseMatrix m = k == 0 ? reference : surrogate_population(3, 7, 5, 2, static_cast<Seed>(k));
    if (k == 1) m.data(0, 0) = -1e-300;
    if (k == 2) m.data = random_matrix(21, 5, rng) * 1e8;
    const fs::path first = dir / "first.csv", second = dir / "second.csv";
    write_response_matrix(first, m);
    const ResponseMatrix back = read_response_matrix(first);
    write_response_matrix(second, back);
    v.expect(back.data == m.data, "round trip changed values");
    v.expect(file_bytes(first) == file_bytes(second), "round trip changed bytes");
  }
  fs::remove_all(dir);
  note("bptt, e-prop and node-perturbation traces rerun byte-identically; 5 response files round-trip");
  return v;
}

}  // namespace

int main() {
  const auto timed = [](int id, const char* name, double budget, const std::function<Outcome()>& fn,
                         double already = 0.0) {
    const auto start = Clock::now();
    Outcome v = fn();
    report(id, name, v, already + seconds_since(start), budget);
  };

  timed(1, "gradient oracle", 30, gradient_oracle);
  timed(2, "truncation identities", 10, truncation_identities);
  timed(3, "Procrustes metric suite", 60, procrustes_suite);

  Runs runs;
  {
    const auto start = Clock::now();
    const ExperimentConfig c = reach_config(Rule::bptt, 1.0, kReferenceSeed);
    runs.reference = evaluation_responses(run_training(c).final_params, c);
    runs.reference_seconds = seconds_since(start);
  }
  timed(4, "training smoke", 600, [&] { return training_smoke(runs); });
  timed(5, "trained closer than untrained", 600, [&] {
    note("reference: held-out bptt network, seed %llu, trained in %.1f s",
         static_cast<unsigned long long>(kReferenceSeed), runs.reference_seconds);
    return trained_closer(runs);
  }, runs.reference_seconds);
  timed(6, "rule effect below gain effect", 600, [&] { return rule_vs_gain(runs); });
  timed(7, "estimators", 120, estimators);
  timed(8, "scalar flow", 30, scalar_flow);
  timed(9, "trial averaging", 60, trial_averaging);
  timed(10, "determinism and round trip", 60, determinism);

  std::printf("%d of 10 criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
