#include "rulesim/rules.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rulesim/errors.hpp"

namespace rulesim {

std::string_view to_string(Rule rule) {
  switch (rule) {
    case Rule::bptt: return "bptt";
    case Rule::tbptt: return "tbptt";
    case Rule::eprop: return "eprop";
    case Rule::modprop: return "modprop";
    case Rule::node_perturbation: return "nodep";
    case Rule::evolution_strategies: return "es";
  }
  return "unknown";
}

Rule parse_rule(std::string_view name) {
  for (Rule r : all_rules()) {
    if (name == to_string(r)) return r;
  }
  if (name == "truncated_bptt" || name == "t-bptt") return Rule::tbptt;
  if (name == "e-prop") return Rule::eprop;
  if (name == "node_perturbation" || name == "node-perturbation") return Rule::node_perturbation;
  if (name == "evolution_strategies" || name == "evolution-strategies") return Rule::evolution_strategies;
  throw ConfigError("unknown learning rule '" + std::string(name) + "'");
}

std::vector<Rule> all_rules() {
  return {Rule::bptt, Rule::tbptt, Rule::eprop, Rule::modprop, Rule::node_perturbation, Rule::evolution_strategies};
}

GradientSet GradientSet::zeros_like(const NetworkParams& params, Rule rule) {
  GradientSet g;
  g.w_in = Matrix::Zero(params.w_in.rows(), params.w_in.cols());
  g.w_rec = Matrix::Zero(params.w_rec.rows(), params.w_rec.cols());
  g.w_out = Matrix::Zero(params.w_out.rows(), params.w_out.cols());
  g.rule = rule;
  return g;
}

double GradientSet::squared_norm() const {
  return w_in.squaredNorm() + w_rec.squaredNorm() + w_out.squaredNorm();
}

GradientSet& GradientSet::operator*=(double factor) {
  w_in *= factor;
  w_rec *= factor;
  w_out *= factor;
  return *this;
}

double dot(const GradientSet& a, const GradientSet& b) {
  if (a.w_rec.rows() != b.w_rec.rows() || a.w_in.cols() != b.w_in.cols() || a.w_out.rows() != b.w_out.rows()) {
    throw ShapeError("gradient sets have different shapes");
  }
  return a.w_in.cwiseProduct(b.w_in).sum() + a.w_rec.cwiseProduct(b.w_rec).sum() +
         a.w_out.cwiseProduct(b.w_out).sum();
}

double cosine_similarity(const GradientSet& a, const GradientSet& b) {
  const double na = std::sqrt(a.squared_norm());
  const double nb = std::sqrt(b.squared_norm());
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine similarity of a zero gradient");
  return dot(a, b) / (na * nb);
}

double clip_global_norm(GradientSet& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) grads *= max_norm / norm;
  return norm;
}

void refresh_taps(ModulatorConfig& mod, const NetworkParams& params) {
  const int n = params.n_units();
  if (static_cast<int>(mod.cell_type.size()) != n) throw ShapeError("cell type list does not match unit count");
  std::vector<double> count(static_cast<std::size_t>(mod.n_types), 0.0);
  for (int type : mod.cell_type) count[static_cast<std::size_t>(type)] += 1.0;
  for (double c : count) {
    if (c == 0.0) throw DegenerateInputError("empty cell type");
  }

  mod.taps.clear();
  Matrix power = params.w_rec;
  double decay = 1.0;
  for (int s = 1; s <= mod.s_max; ++s) {
    Matrix block = Matrix::Zero(mod.n_types, mod.n_types);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) block(mod.cell_type[i], mod.cell_type[j]) += power(i, j);
    for (int a = 0; a < mod.n_types; ++a)
      for (int b = 0; b < mod.n_types; ++b)
        block(a, b) *= decay / (count[static_cast<std::size_t>(a)] * count[static_cast<std::size_t>(b)]);
    mod.taps.push_back(std::move(block));
    if (s < mod.s_max) power = params.w_rec * power;
    decay *= mod.mu;
  }
}

ModulatorConfig make_modulator(const NetworkParams& params, double mu, int s_max) {
  if (!params.dale_sign) throw UnsupportedConfigurationError("modprop needs Dale's law to define cell types");
  if (s_max < 1) throw ConfigError("s_max must be at least 1");
  ModulatorConfig mod;
  mod.mu = mu;
  mod.s_max = s_max;
  const Vector& sign = *params.dale_sign;
  const bool mixed = sign.maxCoeff() > 0.0 && sign.minCoeff() < 0.0;
  mod.n_types = mixed ? 2 : 1;
  mod.cell_type.resize(static_cast<std::size_t>(params.n_units()));
  for (int i = 0; i < params.n_units(); ++i) mod.cell_type[static_cast<std::size_t>(i)] = mixed && sign(i) < 0 ? 1 : 0;
  refresh_taps(mod, params);
  return mod;
}

namespace {

void check_route_inputs(const NetworkParams& params, const TrialBatch& batch, const StateTrajectory& traj,
                        const Sequence& dl_dy, const Sequence& signal) {
  const auto t_steps = static_cast<std::size_t>(batch.n_steps());
  if (traj.hidden.size() != t_steps || dl_dy.size() != t_steps || signal.size() != t_steps) {
    throw ShapeError("trajectory, readout error and signal must all span T steps");
  }
  for (std::size_t t = 0; t < t_steps; ++t) {
    if (signal[t].rows() != params.n_units() || signal[t].cols() != batch.n_trials()) {
      throw ShapeError("instructive signal must be N × B at every step");
    }
  }
}

// g_out = Σ_t dL/dŷ_t f(h_t)ᵀ
Matrix readout_gradient(const StateTrajectory& traj, const Sequence& dl_dy) {
  Matrix g = Matrix::Zero(dl_dy.front().rows(), traj.rates.front().rows());
  for (std::size_t t = 0; t < dl_dy.size(); ++t) g.noalias() += dl_dy[t] * traj.rates[t].transpose();
  return g;
}

// Given the adjoint δ_t = dL/dh_t (as a sequence), accumulate the input and
// recurrent gradients: g = (1 - beta) Σ_t δ_t [f(h_{t-1}); x_t]ᵀ.
GradientSet accumulate(const NetworkParams& params, const TrialBatch& batch, const StateTrajectory& traj,
                       const Sequence& adjoint, const Sequence& dl_dy, Rule rule) {
  GradientSet g = GradientSet::zeros_like(params, rule);
  for (std::size_t t = 0; t < adjoint.size(); ++t) {
    g.w_in.noalias() += adjoint[t] * batch.inputs[t].transpose();
    if (t > 0) g.w_rec.noalias() += adjoint[t] * traj.rates[t - 1].transpose();
  }
  g.w_in *= 1.0 - params.beta;
  g.w_rec *= 1.0 - params.beta;
  if (params.sparsity_mask) g.w_rec = g.w_rec.cwiseProduct(*params.sparsity_mask);
  g.w_out = readout_gradient(traj, dl_dy);
  return g;
}

// Jᵀ_{t+1} v where J_{t+1} = ∂h_{t+1}/∂h_t.
Matrix jacobian_transpose(const NetworkParams& params, const Matrix& fprime_t, const Matrix& v) {
  Matrix out = params.w_rec.transpose() * v;
  out = params.beta * v + (1.0 - params.beta) * fprime_t.cwiseProduct(out);
  return out;
}

// d_{t+1} = ∂h_{i,t+1}/∂h_{i,t} = beta + (1 - beta) W_ii f'(h_{i,t})
Matrix diagonal_factor(const NetworkParams& params, const Matrix& fprime_t) {
  Matrix d = fprime_t;
  const Vector w_diag = params.w_rec.diagonal();
  d = (1.0 - params.beta) * (w_diag.asDiagonal() * d);
  d.array() += params.beta;
  return d;
}

Sequence derivatives(const NetworkParams& params, const StateTrajectory& traj) {
  Sequence out;
  out.reserve(traj.hidden.size());
  for (const auto& h : traj.hidden) out.push_back(activation_derivative(h, params.activation));
  return out;
}

}  // namespace

GradientSet bptt_backward(const NetworkParams& params, const TrialBatch& batch, const StateTrajectory& traj,
                          const Sequence& dl_dy, const Sequence& signal) {
  check_route_inputs(params, batch, traj, dl_dy, signal);
  const std::size_t t_steps = signal.size();
  Sequence adjoint(t_steps);
  adjoint[t_steps - 1] = signal[t_steps - 1];
  for (std::size_t t = t_steps - 1; t-- > 0;) {
    adjoint[t] = signal[t] + jacobian_transpose(params, activation_derivative(traj.hidden[t], params.activation),
                                                adjoint[t + 1]);
  }
  return accumulate(params, batch, traj, adjoint, dl_dy, Rule::bptt);
}

GradientSet truncated_backward(const NetworkParams& params, const TrialBatch& batch, const StateTrajectory& traj,
                               const Sequence& dl_dy, const Sequence& signal, int window) {
  check_route_inputs(params, batch, traj, dl_dy, signal);
  const int t_steps = static_cast<int>(signal.size());
  if (window < 1 || window > t_steps) {
    throw ConfigError("truncation window must lie in [1, T] = [1, " + std::to_string(t_steps) + "], got " +
                      std::to_string(window));
  }
  const Sequence fprime = derivatives(params, traj);
  const Matrix zero = Matrix::Zero(signal.front().rows(), signal.front().cols());

  // Full-Jacobian part: each loss step t is carried back window - 1 steps.
  // seed[u] holds the credit from step u + window - 1 that arrived at u and
  // must continue along the diagonal path.
  Sequence adjoint(static_cast<std::size_t>(t_steps), zero);
  Sequence seed(static_cast<std::size_t>(t_steps), zero);
  for (int t = 0; t < t_steps; ++t) {
    Matrix a = signal[static_cast<std::size_t>(t)];
    adjoint[static_cast<std::size_t>(t)] += a;
    int k = t;
    for (int hop = 1; hop < window && k > 0; ++hop) {
      a = jacobian_transpose(params, fprime[static_cast<std::size_t>(k - 1)], a);
      --k;
      adjoint[static_cast<std::size_t>(k)] += a;
    }
    if (t - (window - 1) == k && k >= 1) seed[static_cast<std::size_t>(k)] += a;
  }

  // Diagonal continuation: O_s = d_{s+1} ⊙ (O_{s+1} + seed_{s+1}).
  Matrix overflow = zero;
  for (int s = t_steps - 2; s >= 0; --s) {
    const auto su = static_cast<std::size_t>(s);
    overflow = diagonal_factor(params, fprime[su]).cwiseProduct(overflow + seed[su + 1]);
    adjoint[su] += overflow;
  }
  return accumulate(params, batch, traj, adjoint, dl_dy, Rule::tbptt);
}

GradientSet three_factor_gradient(const NetworkParams& params, const TrialBatch& batch,
                                  const StateTrajectory& traj, const Sequence& dl_dy, const Sequence& signal) {
  check_route_inputs(params, batch, traj, dl_dy, signal);
  const std::size_t t_steps = signal.size();
  Sequence adjoint(t_steps);
  adjoint[t_steps - 1] = signal[t_steps - 1];
  for (std::size_t t = t_steps - 1; t-- > 0;) {
    const Matrix d = diagonal_factor(params, activation_derivative(traj.hidden[t], params.activation));
    adjoint[t] = signal[t] + d.cwiseProduct(adjoint[t + 1]);
  }
  return accumulate(params, batch, traj, adjoint, dl_dy, Rule::eprop);
}

Sequence modprop_signal(const NetworkParams& params, const StateTrajectory& traj, const Sequence& signal,
                        const ModulatorConfig& mod) {
  const int n = params.n_units();
  if (static_cast<int>(mod.cell_type.size()) != n) throw ShapeError("cell type list does not match unit count");
  if (static_cast<int>(mod.taps.size()) != mod.s_max) throw ShapeError("modulator needs s_max taps");
  Matrix membership = Matrix::Zero(n, mod.n_types);  // N × types
  for (int i = 0; i < n; ++i) membership(i, mod.cell_type[static_cast<std::size_t>(i)]) = 1.0;

  const std::size_t t_steps = signal.size();
  // A_t(alpha, b) = Σ_{l in alpha} I_{l,t} f'(h_{l,t})
  Sequence aggregate(t_steps);
  for (std::size_t t = 0; t < t_steps; ++t) {
    aggregate[t] = membership.transpose() *
                   signal[t].cwiseProduct(activation_derivative(traj.hidden[t], params.activation));
  }
  Sequence out = signal;
  for (std::size_t t = 0; t < t_steps; ++t) {
    Matrix by_type = Matrix::Zero(mod.n_types, signal[t].cols());
    for (int s = 1; s <= mod.s_max && t + static_cast<std::size_t>(s) < t_steps; ++s) {
      by_type.noalias() += mod.taps[static_cast<std::size_t>(s - 1)].transpose() * aggregate[t + static_cast<std::size_t>(s)];
    }
    out[t].noalias() += membership * by_type;
  }
  return out;
}

Sequence node_perturbation_signal(const NetworkParams& params, const TrialBatch& batch, const StateTrajectory& traj,
                                  const Sequence& perturbations, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("perturbation sigma must be positive");
  if (perturbations.size() != traj.hidden.size()) throw ShapeError("one perturbation per step required");
  const double norm = loss_normaliser(batch);
  const int n_trials = batch.n_trials();
  Sequence out;
  out.reserve(perturbations.size());
  for (int t = 0; t < batch.n_steps(); ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const Matrix& xi = perturbations[ts];
    if (xi.rows() != params.n_units() || xi.cols() != n_trials) throw ShapeError("perturbation must be N × B");
    Matrix est = Matrix::Zero(params.n_units(), n_trials);
    const Matrix perturbed_out = params.w_out * activate(traj.hidden[ts] + xi, params.activation);
    for (int b = 0; b < n_trials; ++b) {
      if (batch.loss_mask(t, b) == 0.0) continue;
      const double base = step_loss(traj.outputs[ts].col(b), batch, t, b, norm);
      const double moved = step_loss(perturbed_out.col(b), batch, t, b, norm);
      est.col(b) = (moved - base) / (sigma * sigma) * xi.col(b);
    }
    out.push_back(std::move(est));
  }
  return out;
}

Sequence node_perturbation_signal(const NetworkParams& params, const TrialBatch& batch, const StateTrajectory& traj,
                                  double sigma, Rng& rng) {
  Sequence xi;
  xi.reserve(traj.hidden.size());
  for (std::size_t t = 0; t < traj.hidden.size(); ++t) {
    Matrix m(params.n_units(), batch.n_trials());
    for (Eigen::Index b = 0; b < m.cols(); ++b)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, b) = sigma * rng.normal();
    xi.push_back(std::move(m));
  }
  return node_perturbation_signal(params, batch, traj, xi, sigma);
}

Sequence feedback_alignment_signal(const NetworkParams& params, const Matrix& fixed_feedback, const Sequence& dl_dy,
                                   const StateTrajectory& traj) {
  if (fixed_feedback.rows() != params.n_units() || fixed_feedback.cols() != params.n_outputs()) {
    throw ShapeError("feedback weights must be N × N_out");
  }
  return instructive_signal(fixed_feedback, dl_dy, traj, params.activation);
}

Matrix random_feedback(const NetworkParams& params, Seed seed) {
  Rng rng(derive_seed(seed, "feedback"));
  const double bound = 1.0 / std::sqrt(static_cast<double>(params.n_units()));
  Matrix b(params.n_units(), params.n_outputs());
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    for (Eigen::Index i = 0; i < b.rows(); ++i) b(i, j) = rng.uniform(-bound, bound);
  return b;
}

Vector es_estimate(const std::function<double(const Vector&)>& objective, const Vector& x, double sigma, int samples,
                   Rng& rng, const Vector* mask) {
  if (!(sigma > 0.0)) throw ConfigError("ES sigma must be positive");
  if (samples < 1) throw ConfigError("ES needs at least one sample");
  if (mask && mask->size() != x.size()) throw ShapeError("ES mask must match the parameter vector");
  Vector grad = Vector::Zero(x.size());
  Vector eps(x.size());
  for (int s = 0; s < samples; ++s) {
    for (Eigen::Index i = 0; i < x.size(); ++i) eps(i) = rng.normal();
    if (mask) eps = eps.cwiseProduct(*mask);
    grad += objective(x + sigma * eps) * eps;
  }
  return grad / (sigma * samples);
}

Vector flatten(const NetworkParams& params) {
  Vector flat(params.w_in.size() + params.w_rec.size() + params.w_out.size());
  flat << params.w_in.reshaped(), params.w_rec.reshaped(), params.w_out.reshaped();
  return flat;
}

void unflatten(const Vector& flat, NetworkParams& params) {
  const Eigen::Index n_in = params.w_in.size(), n_rec = params.w_rec.size(), n_out = params.w_out.size();
  if (flat.size() != n_in + n_rec + n_out) throw ShapeError("flat parameter vector has the wrong length");
  params.w_in.reshaped() = flat.segment(0, n_in);
  params.w_rec.reshaped() = flat.segment(n_in, n_rec);
  params.w_out.reshaped() = flat.segment(n_in + n_rec, n_out);
}

namespace {

struct Recorded {
  StateTrajectory trajectory;
  LossSignal signal;
};

Recorded record(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed) {
  Recorded r;
  r.trajectory = rnn_forward(params, batch, noise_seed);
  r.signal = loss_and_signal(params, r.trajectory, batch);
  return r;
}

GradientSet from_flat(const NetworkParams& params, const Vector& flat, Rule rule) {
  NetworkParams shape = params;
  unflatten(flat, shape);
  GradientSet g;
  g.w_in = std::move(shape.w_in);
  g.w_rec = std::move(shape.w_rec);
  g.w_out = std::move(shape.w_out);
  g.rule = rule;
  return g;
}

}  // namespace

GradientSet bptt_gradient(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed) {
  const Recorded r = record(params, batch, noise_seed);
  return bptt_backward(params, batch, r.trajectory, r.signal.dl_dy, r.signal.dl_dh);
}

GradientSet truncated_bptt_gradient(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed,
                                    int window) {
  if (window < 1 || window > batch.n_steps()) {
    throw ConfigError("truncation window must lie in [1, T] = [1, " + std::to_string(batch.n_steps()) + "], got " +
                      std::to_string(window));
  }
  const Recorded r = record(params, batch, noise_seed);
  return truncated_backward(params, batch, r.trajectory, r.signal.dl_dy, r.signal.dl_dh, window);
}

GradientSet eprop_gradient(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed) {
  const Recorded r = record(params, batch, noise_seed);
  return three_factor_gradient(params, batch, r.trajectory, r.signal.dl_dy, r.signal.dl_dh);
}

namespace {

void require_modprop_support(const NetworkParams& params) {
  if (params.activation != Activation::relu) {
    throw UnsupportedConfigurationError("modprop requires the relu activation, got " +
                                        std::string(to_string(params.activation)));
  }
  if (!params.dale_sign) throw UnsupportedConfigurationError("modprop requires Dale's law (cell types)");
}

}  // namespace

GradientSet modprop_gradient(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed,
                             const ModulatorConfig& mod) {
  require_modprop_support(params);
  const Recorded r = record(params, batch, noise_seed);
  const Sequence effective = modprop_signal(params, r.trajectory, r.signal.dl_dh, mod);
  // The cell-type correction applies to recurrent weights only.
  GradientSet g = three_factor_gradient(params, batch, r.trajectory, r.signal.dl_dy, effective);
  g.w_in = three_factor_gradient(params, batch, r.trajectory, r.signal.dl_dy, r.signal.dl_dh).w_in;
  g.rule = Rule::modprop;
  return g;
}

GradientSet node_perturbation_gradient(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed,
                                       double sigma, Seed perturbation_seed) {
  const Recorded r = record(params, batch, noise_seed);
  Rng rng(perturbation_seed);
  const Sequence estimate = node_perturbation_signal(params, batch, r.trajectory, sigma, rng);
  GradientSet g = three_factor_gradient(params, batch, r.trajectory, r.signal.dl_dy, estimate);
  g.rule = Rule::node_perturbation;
  return g;
}

GradientSet evolution_strategies_gradient(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed,
                                          double sigma, int samples, Seed perturbation_seed) {
  Vector mask = Vector::Ones(params.w_in.size() + params.w_rec.size() + params.w_out.size());
  if (params.sparsity_mask) mask.segment(params.w_in.size(), params.w_rec.size()) = params.sparsity_mask->reshaped();
  NetworkParams probe = params;
  const auto objective = [&](const Vector& flat) {
    unflatten(flat, probe);
    return batch_loss(rnn_forward(probe, batch, noise_seed), batch);
  };
  Rng rng(perturbation_seed);
  const Vector flat = es_estimate(objective, flatten(params), sigma, samples, rng, &mask);
  return from_flat(params, flat, Rule::evolution_strategies);
}

GradientEngine::GradientEngine(RuleSettings settings, const NetworkParams& initial, Seed seed)
    : settings_(settings) {
  if (settings_.random_feedback) feedback_ = random_feedback(initial, seed);
  if (settings_.rule == Rule::modprop) {
    require_modprop_support(initial);
    modulator_ = make_modulator(initial, settings_.mu, settings_.s_max);
  }
  if (settings_.rule == Rule::tbptt && settings_.truncation_window < 1) {
    throw ConfigError("truncation window must be at least 1");
  }
}

GradientSet GradientEngine::compute(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed,
                                    Seed perturbation_seed) {
  const Rule rule = settings_.rule;
  if (rule == Rule::evolution_strategies) {
    return evolution_strategies_gradient(params, batch, noise_seed, settings_.es_sigma, settings_.es_samples,
                                         perturbation_seed);
  }
  const Recorded r = record(params, batch, noise_seed);
  const Sequence& dl_dy = r.signal.dl_dy;
  const Sequence signal =
      feedback_ ? feedback_alignment_signal(params, *feedback_, dl_dy, r.trajectory) : r.signal.dl_dh;

  GradientSet g;
  switch (rule) {
    case Rule::bptt:
      g = bptt_backward(params, batch, r.trajectory, dl_dy, signal);
      break;
    case Rule::tbptt:
      g = truncated_backward(params, batch, r.trajectory, dl_dy, signal,
                             std::min(settings_.truncation_window, batch.n_steps()));
      break;
    case Rule::eprop:
      g = three_factor_gradient(params, batch, r.trajectory, dl_dy, signal);
      break;
    case Rule::modprop: {
      refresh_taps(*modulator_, params);
      const GradientSet plain = three_factor_gradient(params, batch, r.trajectory, dl_dy, signal);
      g = three_factor_gradient(params, batch, r.trajectory, dl_dy,
                                modprop_signal(params, r.trajectory, signal, *modulator_));
      g.w_in = plain.w_in;
      break;
    }
    case Rule::node_perturbation: {
      Rng rng(perturbation_seed);
      g = three_factor_gradient(params, batch, r.trajectory, dl_dy,
                                node_perturbation_signal(params, batch, r.trajectory, settings_.np_sigma, rng));
      break;
    }
    case Rule::evolution_strategies:
      break;
  }
  g.rule = rule;
  return g;
}

}  // namespace rulesim
