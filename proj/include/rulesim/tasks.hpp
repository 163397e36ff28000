#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "rulesim/response_matrix.hpp"
#include "rulesim/rnn.hpp"
#include "rulesim/types.hpp"

namespace rulesim {

enum class TaskKind { context_integration, reach_emg };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

/// Synthetic task definition. Epoch durations are in ms and are converted to
/// steps with round-to-nearest at the chosen dt.
struct TaskSpec {
  TaskKind kind = TaskKind::reach_emg;
  double dt = 10.0;

  // Context-dependent integration. Inputs: fixation, motion stream, colour
  // stream, motion-context cue, colour-context cue. Two output classes.
  double fixation_ms = 350.0;
  double stimulus_ms = 750.0;
  double delay_ms = 300.0;
  double decision_ms = 300.0;
  std::vector<double> coherences{0.04, 0.08, 0.16};  // magnitudes; each used with both signs
  double stimulus_noise = 0.1;

  // Condition-cued EMG production. 15 condition-code inputs plus a hold cue;
  // 7 EMG-like outputs.
  int reach_conditions = 27;
  int condition_code_dim = 15;
  int muscles = 7;
  double preparation_ms = 1450.0;
  double movement_ms = 410.0;
  int bumps_per_muscle = 3;
  double bump_width_min_ms = 30.0;
  double bump_width_max_ms = 80.0;
  /// When false the condition code switches off at movement onset.
  bool code_after_onset = true;

  /// Seed for the frozen per-condition structure (codes and EMG templates).
  Seed seed = 7;
};

struct EpochLayout {
  int fixation = 0, stimulus = 0, delay = 0, decision = 0;  // context task
  int preparation = 0, movement = 0;                         // reach task
  int total = 0;
};

int steps_for(double duration_ms, double dt);
EpochLayout epoch_layout(const TaskSpec& spec);
int task_inputs(const TaskSpec& spec);
int task_outputs(const TaskSpec& spec);
int task_conditions(const TaskSpec& spec);
LossKind task_loss(const TaskSpec& spec);

/// Signed coherence levels, ascending: -c_max … -c_min, c_min … c_max.
std::vector<double> signed_coherences(const TaskSpec& spec);

/// Condition id = context · L² + motion_bin · L + colour_bin with L signed levels.
struct ContextCondition {
  int context = 0;  // 0 = attend motion, 1 = attend colour
  int motion_bin = 0;
  int colour_bin = 0;
};
int encode_context_condition(const TaskSpec& spec, const ContextCondition& c);
ContextCondition decode_context_condition(const TaskSpec& spec, int id);

/// Conditions drawn uniformly; one trial per column.
TrialBatch gen_context_task(const TaskSpec& spec, int batch_size, Seed seed);
TrialBatch gen_reach_task(const TaskSpec& spec, int batch_size, Seed seed);
TrialBatch generate_batch(const TaskSpec& spec, int batch_size, Seed seed);

/// Explicit condition list (used for evaluation batches and tests).
TrialBatch context_trials(const TaskSpec& spec, std::span<const int> condition_ids, Seed seed);
TrialBatch reach_trials(const TaskSpec& spec, std::span<const int> condition_ids);

/// Every condition repeated trials_per_condition times, in condition order.
TrialBatch evaluation_batch(const TaskSpec& spec, int trials_per_condition, Seed seed);

/// Per-condition mean over single-trial matrices (each 1 condition × T × N).
/// Output rows are condition-major in ascending condition id.
ResponseMatrix trial_average(std::span<const ResponseMatrix> trials, std::span<const int> condition_ids);

/// Trial-averaged model responses (rates or states) grouped by condition id.
ResponseMatrix condition_averaged_responses(const StateTrajectory& trajectory, std::span<const int> condition_ids,
                                            bool use_rates, std::string_view source = "model");

}  // namespace rulesim
