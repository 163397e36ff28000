#pragma once

#include <complex>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rulesim/sweep.hpp"
#include "rulesim/training.hpp"

namespace rulesim {

/// Seed-aggregated learning curve point for one rule at one iteration.
struct CurvePoint {
  Rule rule = Rule::bptt;
  int iteration = 0;
  int n = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::optional<double> mean_distance;
  std::optional<double> std_distance;  // sample std over seeds
};

/// Groups rows by (rule, iteration) across every trace; std is the sample
/// standard deviation over seeds.
std::vector<CurvePoint> aggregate_curves(const std::vector<TrainingTrace>& traces);

struct ReportInputs {
  std::vector<TrainingTrace> traces;
  std::vector<SweepCell> sweep_cells;
  std::vector<std::pair<std::string, std::vector<std::complex<double>>>> spectra;
};

struct ReportOutputs {
  std::vector<std::filesystem::path> csv;
  std::vector<std::filesystem::path> svg;
};

/// curves.csv always; distance_vs_accuracy.svg when any row has a distance;
/// gain_sweep.svg when sweep cells carry distances; eigenvalues.svg and
/// eigenvalues.csv when spectra are given. Throws std::runtime_error when
/// out_dir cannot be written.
ReportOutputs emit_report(const ReportInputs& inputs, const std::filesystem::path& out_dir);

/// Loads trace_*.csv, eig_*.csv and sweep.csv found directly under dir.
ReportInputs load_report_inputs(const std::filesystem::path& dir);

/// Escapes &, <, >, " and ' for SVG text and attributes.
std::string xml_escape(const std::string& text);

}  // namespace rulesim
