#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rulesim/config.hpp"
#include "rulesim/response_matrix.hpp"
#include "rulesim/rnn.hpp"
#include "rulesim/rules.hpp"

namespace rulesim {

struct TraceRow {
  int iteration = 0;
  Rule rule = Rule::bptt;
  Seed seed = 0;
  double accuracy = 0.0;
  double loss = 0.0;
  std::optional<double> procrustes;
  std::optional<double> cka;
  std::optional<double> cca;
};

struct TrainingTrace {
  std::string config_hash;
  std::vector<TraceRow> rows;
  /// Seconds since the start of the run, one per row. Kept out of the trace
  /// CSV so traces stay byte-reproducible.
  std::vector<double> wall_time;
};

struct TrainingResult {
  TrainingTrace trace;
  NetworkParams initial;
  NetworkParams final_params;
};

/// Fixed, noise-free evaluation batch shared by every rule and seed of a task.
TrialBatch evaluation_set(const ExperimentConfig& config);

/// Trial-averaged rates of a noise-free pass over the evaluation set.
ResponseMatrix evaluation_responses(const NetworkParams& params, const ExperimentConfig& config);

/// Trains one network. Rows are written at iteration 0, every eval_every
/// iterations and at the final iteration. With a reference, each row also
/// carries the similarity scores of the evaluation responses against it;
/// a reference whose shape does not match the evaluation set raises ShapeError.
TrainingResult run_training(const ExperimentConfig& config, const ResponseMatrix* reference = nullptr);

/// Procrustes distance at the target accuracy by linear interpolation between
/// the first bracketing pair of rows. A series already at the target in its
/// first row reports that row; a series that never reaches it gives nullopt.
std::optional<double> distance_at_accuracy(const TrainingTrace& trace, double target);

/// Iteration at which the accuracy first reaches target (interpolated), or nullopt.
std::optional<double> iterations_to_accuracy(const TrainingTrace& trace, double target);

/// CSV: iteration,rule,seed,normalized_accuracy,loss,procrustes,cka,cca,config_hash
void write_trace_csv(std::ostream& out, const TrainingTrace& trace);
TrainingTrace read_trace_csv(std::istream& in);
TrainingTrace read_trace_csv(const std::filesystem::path& path);

void write_params(std::ostream& out, const NetworkParams& params);

struct PersistedRun {
  std::filesystem::path trace;
  std::filesystem::path params;
  std::filesystem::path timing;
};

/// trace_<hash>.csv, params_<hash>.txt and timing_<hash>.csv under out_dir.
PersistedRun persist_run(const TrainingResult& result, const std::filesystem::path& out_dir);

}  // namespace rulesim
