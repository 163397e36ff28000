#pragma once

#include <complex>
#include <functional>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rulesim/config.hpp"
#include "rulesim/response_matrix.hpp"
#include "rulesim/similarity.hpp"
#include "rulesim/stats.hpp"
#include "rulesim/training.hpp"

namespace rulesim {

/// RULESIM_WORKERS if set and positive, else the hardware concurrency (>= 1).
int default_workers();

/// Runs fn(0..count-1) on a bounded pool of worker threads. Each index is
/// handled by exactly one worker; the first exception is rethrown after all
/// workers stop.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

struct SweepJob {
  Rule rule = Rule::bptt;
  double gain = 1.0;
  double lr = 1e-3;
  Seed seed = 1;
};

struct SweepRun {
  SweepJob job;
  TrainingTrace trace;
  std::optional<double> distance;  // at the target accuracy
  double final_accuracy = 0.0;
};

struct SweepCell {
  Rule rule = Rule::bptt;
  double gain = 1.0;
  double lr = 1e-3;  // learning rate selected for this cell
  int n_seeds = 0;
  std::vector<double> distances;  // seeds that reached the target
  std::optional<double> mean_distance;
  std::optional<double> std_distance;
  std::optional<double> mean_untrained;

  bool unreachable() const { return distances.empty(); }
};

struct CellComparison {
  std::string first;
  std::string second;
  TTest test;
};

struct SweepResult {
  double target_accuracy = 0.8;
  std::vector<SweepRun> runs;
  std::vector<SweepCell> cells;
  std::vector<CellComparison> comparisons;
};

ExperimentConfig job_config(const ExperimentConfig& base, const SweepJob& job);

/// Trains every (rule, gain, lr, seed) job against the reference. For each
/// (rule, gain) the learning rate with the most seeds reaching the target
/// is kept (ties: higher mean final accuracy, then list order); cells report
/// mean ± sample std of the interpolated distance over those seeds. Pairwise
/// uncorrected Student t-tests compare rules within a gain and gains within
/// a rule.
SweepResult run_gain_sweep(const ExperimentConfig& base, const ResponseMatrix& reference, int workers = 0);

std::string cell_label(const SweepCell& cell);

/// sweep.csv: rule,gain,lr,n_seeds,n_reached,mean_distance,std_distance,mean_untrained,status
void write_sweep_csv(std::ostream& out, const SweepResult& result);
std::vector<SweepCell> read_sweep_csv(std::istream& in);

/// sweep.csv, sweep_runs.csv, sweep_tests.csv and sweep_notes.txt.
void write_sweep_outputs(const SweepResult& result, const std::filesystem::path& out_dir);

struct GalleryEntry {
  std::string label;
  RuleSettings rule;
};

/// bptt, tbptt, eprop, eprop with random feedback, nodep, es, and modprop
/// when the network uses relu with Dale's law.
std::vector<GalleryEntry> default_gallery(const ExperimentConfig& base);

struct GalleryRun {
  std::string label;
  TrainingResult result;
  std::vector<std::complex<double>> eigenvalues;
};

/// Every entry trained from the same initialization and batches.
std::vector<GalleryRun> run_rule_gallery(const ExperimentConfig& base, const std::vector<GalleryEntry>& entries,
                                         const ResponseMatrix* reference, int workers = 0);

/// real,imag per line, one line per eigenvalue.
void write_eigenspectrum_csv(std::ostream& out, const std::vector<std::complex<double>>& eigenvalues);
std::vector<std::complex<double>> read_eigenspectrum_csv(std::istream& in);

/// Both files read as ResponseMatrix; scores with preprocessing recorded.
std::vector<SimilarityScore> run_compare(const std::filesystem::path& a, const std::filesystem::path& b,
                                         int cca_rank = 20);

}  // namespace rulesim
