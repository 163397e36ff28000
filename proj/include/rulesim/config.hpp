#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rulesim/rnn.hpp"
#include "rulesim/rules.hpp"
#include "rulesim/tasks.hpp"
#include "rulesim/types.hpp"

namespace rulesim {

struct TrainingSettings {
  int iterations = 1000;
  int batch_size = 100;
  double lr = 1e-3;
  int eval_every = 25;
  double clip_norm = 1.0;
  Seed seed = 1;
  /// Trials per condition in the fixed evaluation batch (context task; the
  /// reach task is deterministic per condition and uses one).
  int eval_trials_per_condition = 4;
};

struct SimilaritySettings {
  int cca_rank = 20;
  /// Compare rates f(h) with the reference, or raw states h.
  bool use_rates = true;
};

struct SweepSettings {
  std::vector<Rule> rules{Rule::bptt, Rule::eprop};
  std::vector<double> gains{0.0, 0.5, 1.0, 1.5};
  std::vector<double> learning_rates{3e-3, 1e-3, 3e-4, 1e-4};
  std::vector<Seed> seeds{1, 2, 3, 4};
  double target_accuracy = 0.8;
};

struct ExperimentConfig {
  NetworkConfig network;
  TaskSpec task;
  TrainingSettings training;
  RuleSettings rule;
  SimilaritySettings similarity;
  SweepSettings sweep;

  /// Every effective setting as sorted `section.key = value` lines.
  std::string canonical() const;
  /// 16 hex digits of FNV-1a over canonical().
  std::string hash() const;
  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Defaults for a task: input/output widths, tau_m (reach 50 ms, context
/// 100 ms) and iteration budget (reach 1000, context 3000).
ExperimentConfig default_config(TaskKind kind);

/// INI grammar: `[section]` headers and `key = value` lines; `#` or `;`
/// start comments. Sections: network, task, training, rule, similarity,
/// sweep. Unknown sections or keys raise ConfigError.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace rulesim
