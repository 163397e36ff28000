#pragma once

#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "rulesim/random.hpp"
#include "rulesim/rnn.hpp"
#include "rulesim/types.hpp"

namespace rulesim {

enum class Rule { bptt, tbptt, eprop, modprop, node_perturbation, evolution_strategies };

std::string_view to_string(Rule rule);
Rule parse_rule(std::string_view name);
std::vector<Rule> all_rules();

/// Gradient (or gradient estimate) for every trainable tensor, shaped like
/// NetworkParams.
struct GradientSet {
  Matrix w_in;
  Matrix w_rec;
  Matrix w_out;
  Rule rule = Rule::bptt;

  static GradientSet zeros_like(const NetworkParams& params, Rule rule);
  double squared_norm() const;
  GradientSet& operator*=(double factor);
};

double dot(const GradientSet& a, const GradientSet& b);
double cosine_similarity(const GradientSet& a, const GradientSet& b);
/// Rescales in place so the global L2 norm is at most max_norm; returns the
/// norm before clipping.
double clip_global_norm(GradientSet& grads, double max_norm);

/// Cell-type modulatory filters. taps[s-1](alpha, beta) = mu^(s-1) · mean
/// of (W_rec^s) over rows of type alpha and columns of type beta.
struct ModulatorConfig {
  std::vector<int> cell_type;  // per unit
  int n_types = 1;
  double mu = 0.25;
  int s_max = 5;
  std::vector<Matrix> taps;
};

/// Types from the Dale signs: inhibitory units get type 1 when both signs
/// occur, otherwise every unit shares type 0. Taps filled
/// from the current recurrent weights.
ModulatorConfig make_modulator(const NetworkParams& params, double mu, int s_max);
void refresh_taps(ModulatorConfig& mod, const NetworkParams& params);

// ---------------------------------------------------------------------------
// Backward routes. Each takes one recorded forward pass, the readout error
// dL/dŷ (for the exact readout gradient) and the per-step instructive signal
// injected into the hidden units.
// ---------------------------------------------------------------------------

/// Full reverse-time accumulation through the recurrent Jacobian.
GradientSet bptt_backward(const NetworkParams& params, const TrialBatch& batch, const StateTrajectory& trajectory,
                          const Sequence& dl_dy, const Sequence& signal);

/// Credit from each loss step flows through the full recurrent Jacobian for
/// window - 1 steps; older credit continues only through each unit's own
/// diagonal factor. window = T is BPTT, window = 1 is e-prop.
GradientSet truncated_backward(const NetworkParams& params, const TrialBatch& batch,
                               const StateTrajectory& trajectory, const Sequence& dl_dy, const Sequence& signal,
                               int window);

/// Three-factor update Σ_t I_{i,t} e_{ij,t} with self-term-only eligibility
/// traces, evaluated in reverse order (adjoint of the diagonal recursion).
/// eprop_gradient_online in eligibility.hpp evaluates the same sum forward.
GradientSet three_factor_gradient(const NetworkParams& params, const TrialBatch& batch,
                                  const StateTrajectory& trajectory, const Sequence& dl_dy, const Sequence& signal);

/// I + J where J folds the type-aggregated modulatory term of ModProp into
/// an equivalent instructive signal:
///   J_{i,t} = Σ_{s=1..s_max} Σ_alpha (Σ_{l in alpha} I_{l,t+s} f'(h_{l,t+s})) F_{alpha,type(i),s}
Sequence modprop_signal(const NetworkParams& params, const StateTrajectory& trajectory, const Sequence& signal,
                        const ModulatorConfig& mod);

/// Î_t = (L_t(h_t + xi_t) - L_t(h_t)) xi_t / sigma² with the given per-step
/// perturbations ([t]: N × B); L_t is the trial's loss contribution at step t.
Sequence node_perturbation_signal(const NetworkParams& params, const TrialBatch& batch,
                                  const StateTrajectory& trajectory, const Sequence& perturbations, double sigma);
/// Same, drawing xi ~ N(0, sigma²) per unit, step and trial.
Sequence node_perturbation_signal(const NetworkParams& params, const TrialBatch& batch,
                                  const StateTrajectory& trajectory, double sigma, Rng& rng);

/// I_t = f'(h_t) ⊙ (fixed_feedback · dL/dŷ_t).
Sequence feedback_alignment_signal(const NetworkParams& params, const Matrix& fixed_feedback, const Sequence& dl_dy,
                                   const StateTrajectory& trajectory);
/// N × N_out, uniform in ±1/sqrt(N); drawn once and never trained.
Matrix random_feedback(const NetworkParams& params, Seed seed);

/// Plain Gaussian evolution-strategies estimate (1/(sigma S)) Σ_s f(x + sigma eps_s) eps_s.
/// Coordinates with mask == 0 are never perturbed.
Vector es_estimate(const std::function<double(const Vector&)>& objective, const Vector& x, double sigma,
                   int samples, Rng& rng, const Vector* mask = nullptr);

Vector flatten(const NetworkParams& params);
void unflatten(const Vector& flat, NetworkParams& params);

// ---------------------------------------------------------------------------
// Rule entry points. The hidden-noise realisation is fixed by noise_seed and
// treated as a constant input by every rule.
// ---------------------------------------------------------------------------

GradientSet bptt_gradient(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed);
GradientSet truncated_bptt_gradient(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed,
                                    int window);
GradientSet eprop_gradient(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed);
/// Requires relu and Dale's law; throws UnsupportedConfigurationError otherwise.
GradientSet modprop_gradient(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed,
                             const ModulatorConfig& mod);
GradientSet node_perturbation_gradient(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed,
                                       double sigma, Seed perturbation_seed);
GradientSet evolution_strategies_gradient(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed,
                                          double sigma, int samples, Seed perturbation_seed);

struct RuleSettings {
  Rule rule = Rule::bptt;
  int truncation_window = 10;
  double np_sigma = 0.1;
  double es_sigma = 0.01;
  int es_samples = 50;
  double mu = 0.25;
  int s_max = 5;
  bool random_feedback = false;
};

/// Per-run gradient source: owns the fixed feedback weights and the ModProp
/// filters, and dispatches to the selected rule each iteration.
class GradientEngine {
 public:
  GradientEngine(RuleSettings settings, const NetworkParams& initial, Seed seed);

  GradientSet compute(const NetworkParams& params, const TrialBatch& batch, Seed noise_seed,
                      Seed perturbation_seed);
  const RuleSettings& settings() const { return settings_; }
  const std::optional<Matrix>& feedback() const { return feedback_; }

 private:
  RuleSettings settings_;
  std::optional<Matrix> feedback_;
  std::optional<ModulatorConfig> modulator_;
};

}  // namespace rulesim
