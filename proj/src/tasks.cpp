#include "rulesim/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "rulesim/errors.hpp"
#include "rulesim/random.hpp"

namespace rulesim {

std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::context_integration ? "context" : "reach";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "context" || name == "context-integration") return TaskKind::context_integration;
  if (name == "reach" || name == "reach-emg") return TaskKind::reach_emg;
  throw ConfigError("unknown task kind '" + std::string(name) + "'");
}

int steps_for(double duration_ms, double dt) {
  if (!(dt > 0.0)) throw ConfigError("task dt must be positive");
  if (duration_ms < 0.0) throw ConfigError("epoch durations must be non-negative");
  return static_cast<int>(std::lround(duration_ms / dt));
}

EpochLayout epoch_layout(const TaskSpec& spec) {
  EpochLayout e;
  if (spec.kind == TaskKind::context_integration) {
    e.fixation = steps_for(spec.fixation_ms, spec.dt);
    e.stimulus = steps_for(spec.stimulus_ms, spec.dt);
    e.delay = steps_for(spec.delay_ms, spec.dt);
    e.decision = steps_for(spec.decision_ms, spec.dt);
    e.total = e.fixation + e.stimulus + e.delay + e.decision;
    if (e.decision == 0) throw ConfigError("decision epoch must span at least one step");
  } else {
    e.preparation = steps_for(spec.preparation_ms, spec.dt);
    e.movement = steps_for(spec.movement_ms, spec.dt);
    e.total = e.preparation + e.movement;
    if (e.movement == 0) throw ConfigError("movement epoch must span at least one step");
  }
  if (e.total == 0) throw ConfigError("task has no time steps");
  return e;
}

int task_inputs(const TaskSpec& spec) {
  return spec.kind == TaskKind::context_integration ? 5 : spec.condition_code_dim + 1;
}

int task_outputs(const TaskSpec& spec) { return spec.kind == TaskKind::context_integration ? 2 : spec.muscles; }

std::vector<double> signed_coherences(const TaskSpec& spec) {
  std::vector<double> levels;
  for (double c : spec.coherences) {
    if (!(c > 0.0)) throw ConfigError("coherence magnitudes must be positive");
    levels.push_back(c);
    levels.push_back(-c);
  }
  std::sort(levels.begin(), levels.end());
  return levels;
}

int task_conditions(const TaskSpec& spec) {
  if (spec.kind == TaskKind::reach_emg) return spec.reach_conditions;
  const int levels = static_cast<int>(signed_coherences(spec).size());
  return 2 * levels * levels;
}

LossKind task_loss(const TaskSpec& spec) {
  return spec.kind == TaskKind::context_integration ? LossKind::cross_entropy : LossKind::mse;
}

int encode_context_condition(const TaskSpec& spec, const ContextCondition& c) {
  const int levels = static_cast<int>(signed_coherences(spec).size());
  return c.context * levels * levels + c.motion_bin * levels + c.colour_bin;
}

ContextCondition decode_context_condition(const TaskSpec& spec, int id) {
  const int levels = static_cast<int>(signed_coherences(spec).size());
  if (id < 0 || id >= 2 * levels * levels) throw ShapeError("context condition id out of range");
  return {id / (levels * levels), (id / levels) % levels, id % levels};
}

TrialBatch context_trials(const TaskSpec& spec, std::span<const int> condition_ids, Seed seed) {
  const EpochLayout e = epoch_layout(spec);
  const auto levels = signed_coherences(spec);
  const int n_trials = static_cast<int>(condition_ids.size());
  if (n_trials < 1) throw ConfigError("batch_size must be at least 1");
  const int stim_begin = e.fixation;
  const int stim_end = e.fixation + e.stimulus;
  const int decision_begin = e.total - e.decision;

  TrialBatch batch;
  batch.loss = LossKind::cross_entropy;
  batch.inputs.assign(static_cast<std::size_t>(e.total), Matrix::Zero(5, n_trials));
  batch.loss_mask = Matrix::Zero(e.total, n_trials);
  batch.condition_ids.assign(condition_ids.begin(), condition_ids.end());
  batch.labels.resize(static_cast<std::size_t>(n_trials));

  Rng noise(derive_seed(seed, "stimulus-noise"));
  for (int b = 0; b < n_trials; ++b) {
    const ContextCondition c = decode_context_condition(spec, condition_ids[static_cast<std::size_t>(b)]);
    const double motion = levels[static_cast<std::size_t>(c.motion_bin)];
    const double colour = levels[static_cast<std::size_t>(c.colour_bin)];
    const double relevant = c.context == 0 ? motion : colour;
    batch.labels[static_cast<std::size_t>(b)] = relevant > 0.0 ? 1 : 0;
    for (int t = 0; t < e.total; ++t) {
      Matrix& x = batch.inputs[static_cast<std::size_t>(t)];
      x(0, b) = t < decision_begin ? 1.0 : 0.0;
      if (t >= stim_begin && t < stim_end) {
        x(1, b) = motion + spec.stimulus_noise * noise.normal();
        x(2, b) = colour + spec.stimulus_noise * noise.normal();
      }
      x(3 + c.context, b) = 1.0;
      if (t >= decision_begin) batch.loss_mask(t, b) = 1.0;
    }
  }
  return batch;
}

TrialBatch gen_context_task(const TaskSpec& spec, int batch_size, Seed seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  Rng rng(derive_seed(seed, "conditions"));
  const auto n_cond = static_cast<std::size_t>(task_conditions(spec));
  std::vector<int> ids(static_cast<std::size_t>(batch_size));
  for (auto& id : ids) id = static_cast<int>(rng.below(n_cond));
  return context_trials(spec, ids, seed);
}

namespace {

struct ReachTemplates {
  Matrix codes;                // conditions × code_dim
  std::vector<Matrix> emg;     // per condition: muscles × T
};

ReachTemplates reach_templates(const TaskSpec& spec, const EpochLayout& e) {
  if (spec.reach_conditions < 1 || spec.condition_code_dim < 1 || spec.muscles < 1 || spec.bumps_per_muscle < 0) {
    throw ConfigError("reach task dimensions must be positive");
  }
  if (!(spec.bump_width_min_ms > 0.0) || spec.bump_width_max_ms < spec.bump_width_min_ms) {
    throw ConfigError("bump widths must satisfy 0 < min <= max");
  }
  ReachTemplates tpl;
  Rng code_rng(derive_seed(spec.seed, "condition-codes"));
  const double unit = 1.0 / std::sqrt(static_cast<double>(spec.condition_code_dim));
  tpl.codes.resize(spec.reach_conditions, spec.condition_code_dim);
  for (int c = 0; c < spec.reach_conditions; ++c)
    for (int k = 0; k < spec.condition_code_dim; ++k) tpl.codes(c, k) = (code_rng.uniform() < 0.5 ? -unit : unit);

  Rng emg_rng(derive_seed(spec.seed, "emg-templates"));
  const int onset = e.preparation;
  for (int c = 0; c < spec.reach_conditions; ++c) {
    Matrix m = Matrix::Zero(spec.muscles, e.total);
    for (int k = 0; k < spec.muscles; ++k) {
      for (int j = 0; j < spec.bumps_per_muscle; ++j) {
        const double centre = emg_rng.uniform(onset, e.total - 1);
        const double width = emg_rng.uniform(spec.bump_width_min_ms, spec.bump_width_max_ms) / spec.dt;
        const double amplitude = emg_rng.uniform();
        for (int t = onset; t < e.total; ++t) {
          const double z = (t - centre) / width;
          m(k, t) += amplitude * std::exp(-0.5 * z * z);
        }
      }
    }
    tpl.emg.push_back(std::move(m));
  }
  return tpl;
}

}  // namespace

TrialBatch reach_trials(const TaskSpec& spec, std::span<const int> condition_ids) {
  const EpochLayout e = epoch_layout(spec);
  const ReachTemplates tpl = reach_templates(spec, e);
  const int n_trials = static_cast<int>(condition_ids.size());
  if (n_trials < 1) throw ConfigError("batch_size must be at least 1");
  const int code_dim = spec.condition_code_dim;

  TrialBatch batch;
  batch.loss = LossKind::mse;
  batch.inputs.assign(static_cast<std::size_t>(e.total), Matrix::Zero(code_dim + 1, n_trials));
  batch.targets.assign(static_cast<std::size_t>(e.total), Matrix::Zero(spec.muscles, n_trials));
  batch.loss_mask = Matrix::Ones(e.total, n_trials);
  batch.condition_ids.assign(condition_ids.begin(), condition_ids.end());

  for (int b = 0; b < n_trials; ++b) {
    const int c = condition_ids[static_cast<std::size_t>(b)];
    if (c < 0 || c >= spec.reach_conditions) throw ShapeError("reach condition id out of range");
    for (int t = 0; t < e.total; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      const bool holding = t < e.preparation;
      if (holding || spec.code_after_onset) batch.inputs[ts].col(b).head(code_dim) = tpl.codes.row(c).transpose();
      batch.inputs[ts](code_dim, b) = holding ? 1.0 : 0.0;
      batch.targets[ts].col(b) = tpl.emg[static_cast<std::size_t>(c)].col(t);
    }
  }
  return batch;
}

TrialBatch gen_reach_task(const TaskSpec& spec, int batch_size, Seed seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  Rng rng(derive_seed(seed, "conditions"));
  std::vector<int> ids(static_cast<std::size_t>(batch_size));
  for (auto& id : ids) id = static_cast<int>(rng.below(static_cast<std::size_t>(spec.reach_conditions)));
  return reach_trials(spec, ids);
}

TrialBatch generate_batch(const TaskSpec& spec, int batch_size, Seed seed) {
  return spec.kind == TaskKind::context_integration ? gen_context_task(spec, batch_size, seed)
                                                    : gen_reach_task(spec, batch_size, seed);
}

TrialBatch evaluation_batch(const TaskSpec& spec, int trials_per_condition, Seed seed) {
  if (trials_per_condition < 1) throw ConfigError("trials_per_condition must be at least 1");
  std::vector<int> ids;
  for (int c = 0; c < task_conditions(spec); ++c)
    for (int k = 0; k < trials_per_condition; ++k) ids.push_back(c);
  return spec.kind == TaskKind::context_integration ? context_trials(spec, ids, seed) : reach_trials(spec, ids);
}

ResponseMatrix trial_average(std::span<const ResponseMatrix> trials, std::span<const int> condition_ids) {
  if (trials.empty()) throw DegenerateInputError("trial_average: no trials");
  if (trials.size() != condition_ids.size()) throw ShapeError("trial_average: one condition id per trial required");
  const int steps = trials.front().n_steps;
  const int units = trials.front().n_units();
  std::map<int, std::pair<Matrix, int>> groups;
  for (std::size_t k = 0; k < trials.size(); ++k) {
    const ResponseMatrix& tr = trials[k];
    if (tr.n_conditions != 1 || tr.n_steps != steps || tr.n_units() != units || tr.data.rows() != steps) {
      throw ShapeError("trial_average: every trial must be a single-condition T × N matrix of the same shape");
    }
    auto [it, inserted] = groups.try_emplace(condition_ids[k], Matrix::Zero(steps, units), 0);
    it->second.first += tr.data;
    it->second.second += 1;
  }
  Matrix out(static_cast<Eigen::Index>(groups.size()) * steps, units);
  Eigen::Index row = 0;
  for (const auto& [id, acc] : groups) {
    out.middleRows(row, steps) = acc.first / static_cast<double>(acc.second);
    row += steps;
  }
  return make_response(std::move(out), static_cast<int>(groups.size()), steps, trials.front().source);
}

ResponseMatrix condition_averaged_responses(const StateTrajectory& trajectory, std::span<const int> condition_ids,
                                            bool use_rates, std::string_view source) {
  const int steps = trajectory.n_steps();
  const int n_trials = trajectory.n_trials();
  if (static_cast<int>(condition_ids.size()) != n_trials) throw ShapeError("one condition id per trial required");
  if (n_trials == 0) throw DegenerateInputError("no trials to average");
  const Sequence& seq = use_rates ? trajectory.rates : trajectory.hidden;
  const auto units = seq.front().rows();

  std::map<int, std::vector<int>> members;
  for (int b = 0; b < n_trials; ++b) members[condition_ids[static_cast<std::size_t>(b)]].push_back(b);

  Matrix out(static_cast<Eigen::Index>(members.size()) * steps, units);
  Eigen::Index base = 0;
  for (const auto& [id, trials] : members) {
    const double inv = 1.0 / static_cast<double>(trials.size());
    for (int t = 0; t < steps; ++t) {
      Vector acc = Vector::Zero(units);
      for (int b : trials) acc += seq[static_cast<std::size_t>(t)].col(b);
      out.row(base + t) = (acc * inv).transpose();
    }
    base += steps;
  }
  return make_response(std::move(out), static_cast<int>(members.size()), steps, std::string(source));
}

}  // namespace rulesim
