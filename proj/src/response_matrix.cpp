#include "rulesim/response_matrix.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>

#include "rulesim/errors.hpp"

namespace rulesim {

void ResponseMatrix::validate() const {
  if (n_conditions <= 0 || n_steps <= 0) throw ShapeError("response matrix needs positive conditions and steps");
  if (data.rows() != static_cast<Eigen::Index>(n_conditions) * n_steps) {
    throw ShapeError("response matrix has " + std::to_string(data.rows()) + " rows, expected conditions·steps = " +
                     std::to_string(n_conditions * n_steps));
  }
  if (!data.allFinite()) throw DegenerateInputError("response matrix contains non-finite entries");
  if (!unit_labels.empty() && static_cast<int>(unit_labels.size()) != n_units()) {
    throw ShapeError("unit label count does not match unit count");
  }
}

ResponseMatrix make_response(Matrix data, int n_conditions, int n_steps, std::string source) {
  ResponseMatrix m;
  m.data = std::move(data);
  m.n_conditions = n_conditions;
  m.n_steps = n_steps;
  m.source = std::move(source);
  m.validate();
  return m;
}

std::string format_double(double value) {
  char buf[40];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", value);
  return std::string(buf, static_cast<std::size_t>(len));
}

void write_response_matrix(std::ostream& out, const ResponseMatrix& m) {
  m.validate();
  out << "# conditions=" << m.n_conditions << " steps=" << m.n_steps << " units=" << m.n_units()
      << " source=" << m.source << '\n';
  std::string line;
  for (Eigen::Index r = 0; r < m.data.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < m.data.cols(); ++c) {
      if (c) line += ',';
      line += format_double(m.data(r, c));
    }
    line += '\n';
    out << line;
  }
}

void write_response_matrix(const std::filesystem::path& path, const ResponseMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_response_matrix(out, m);
}

namespace {

int parse_header_int(std::string_view value, std::size_t line, std::string_view key) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size() || v <= 0) {
    throw IngestionError("header field '" + std::string(key) + "' must be a positive integer", line);
  }
  return v;
}

}  // namespace

ResponseMatrix read_response_matrix(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IngestionError("empty response file", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("# ", 0) != 0) throw IngestionError("missing '# conditions=… steps=… units=… source=…' header", 1);

  int conditions = 0, steps = 0, units = 0;
  std::string source;
  {
    std::istringstream fields(line.substr(2));
    std::string token;
    while (fields >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) throw IngestionError("malformed header token '" + token + "'", 1);
      const std::string key = token.substr(0, eq);
      const std::string_view value = std::string_view(token).substr(eq + 1);
      if (key == "conditions") conditions = parse_header_int(value, 1, key);
      else if (key == "steps") steps = parse_header_int(value, 1, key);
      else if (key == "units") units = parse_header_int(value, 1, key);
      else if (key == "source") source = std::string(value);
      else throw IngestionError("unknown header key '" + key + "'", 1);
    }
  }
  if (!conditions || !steps || !units || source.empty()) {
    throw IngestionError("header must define conditions, steps, units and source", 1);
  }

  const Eigen::Index rows = static_cast<Eigen::Index>(conditions) * steps;
  Matrix data(rows, units);
  std::size_t line_no = 1;
  for (Eigen::Index r = 0; r < rows; ++r) {
    ++line_no;
    if (!std::getline(in, line)) {
      throw IngestionError("expected " + std::to_string(rows) + " data rows, found " + std::to_string(r), line_no);
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int c = 0; c < units; ++c) {
      if (c > 0) {
        if (p == end || *p != ',') throw IngestionError("expected " + std::to_string(units) + " columns", line_no);
        ++p;
      }
      double v = 0.0;
      const auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || next == p) throw IngestionError("unparseable number in column " + std::to_string(c + 1), line_no);
      if (!std::isfinite(v)) throw IngestionError("non-finite value in column " + std::to_string(c + 1), line_no);
      data(r, c) = v;
      p = next;
    }
    if (p != end) throw IngestionError("trailing content after " + std::to_string(units) + " columns", line_no);
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line != "\r") throw IngestionError("unexpected content after the last data row", line_no);
  }

  ResponseMatrix m;
  m.data = std::move(data);
  m.n_conditions = conditions;
  m.n_steps = steps;
  m.source = source;
  return m;
}

ResponseMatrix read_response_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string(), 0);
  return read_response_matrix(in);
}

}  // namespace rulesim
