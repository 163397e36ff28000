#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rulesim/types.hpp"

namespace rulesim {

/// Condition/time-stacked unit activity. Row c·T + t holds step t of
/// condition c; columns are units.
struct ResponseMatrix {
  Matrix data;
  int n_conditions = 0;
  int n_steps = 0;
  std::string source = "model";  // model | reference | surrogate
  std::vector<std::string> unit_labels;

  int n_units() const { return static_cast<int>(data.cols()); }

  /// Throws ShapeError on rows != B·T and DegenerateInputError on non-finite entries.
  void validate() const;
};

ResponseMatrix make_response(Matrix data, int n_conditions, int n_steps, std::string source = "model");

/// File format (UTF-8 CSV):
///   # conditions=B steps=T units=N source=<tag>
///   B·T rows of N comma-separated decimals, condition-major
/// Writers emit 17 significant digits ("%.17g"), so a file produced by
/// write_response_matrix survives read → write byte for byte.
void write_response_matrix(std::ostream& out, const ResponseMatrix& m);
void write_response_matrix(const std::filesystem::path& path, const ResponseMatrix& m);

/// Throws IngestionError (with 1-based line number) on malformed input.
ResponseMatrix read_response_matrix(std::istream& in);
ResponseMatrix read_response_matrix(const std::filesystem::path& path);

/// "%.17g" rendering shared by every CSV writer.
std::string format_double(double value);

}  // namespace rulesim
