#include "rulesim/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "rulesim/stats.hpp"

namespace rulesim {

std::string xml_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<CurvePoint> aggregate_curves(const std::vector<TrainingTrace>& traces) {
  struct Bucket {
    std::vector<double> acc, dist;
  };
  std::map<std::pair<int, int>, Bucket> buckets;  // (rule, iteration)
  for (const auto& trace : traces) {
    for (const auto& row : trace.rows) {
      Bucket& b = buckets[{static_cast<int>(row.rule), row.iteration}];
      b.acc.push_back(row.accuracy);
      if (row.procrustes) b.dist.push_back(*row.procrustes);
    }
  }
  std::vector<CurvePoint> out;
  for (const auto& [key, b] : buckets) {
    CurvePoint p;
    p.rule = static_cast<Rule>(key.first);
    p.iteration = key.second;
    p.n = static_cast<int>(b.acc.size());
    p.mean_accuracy = mean(b.acc);
    p.std_accuracy = sample_std(b.acc);
    if (!b.dist.empty()) {
      p.mean_distance = mean(b.dist);
      p.std_distance = sample_std(b.dist);
    }
    out.push_back(p);
  }
  return out;
}

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Canvas {
  double width = 640, height = 440, left = 70, right = 20, top = 40, bottom = 60;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  std::ostringstream body;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }

  void axes(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    body << "<rect x=\"0\" y=\"0\" width=\"" << num(width) << "\" height=\"" << num(height) << "\" fill=\"white\"/>\n";
    body << "<line x1=\"" << num(left) << "\" y1=\"" << num(height - bottom) << "\" x2=\"" << num(width - right)
         << "\" y2=\"" << num(height - bottom) << "\" stroke=\"black\"/>\n";
    body << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\""
         << num(height - bottom) << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double xv = x0 + (x1 - x0) * k / 4.0;
      const double yv = y0 + (y1 - y0) * k / 4.0;
      body << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(height - bottom + 18)
           << "\" font-size=\"11\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n";
      body << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(yv) + 4)
           << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(yv) << "</text>\n";
    }
    body << "<text x=\"" << num(width / 2) << "\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">"
         << xml_escape(title) << "</text>\n";
    body << "<text x=\"" << num(width / 2) << "\" y=\"" << num(height - 18)
         << "\" font-size=\"13\" text-anchor=\"middle\">" << xml_escape(xlabel) << "</text>\n";
    body << "<text x=\"18\" y=\"" << num(height / 2) << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
         << num(height / 2) << ")\">" << xml_escape(ylabel) << "</text>\n";
  }

  void legend(int index, const std::string& label) {
    const double y = top + 16.0 * index;
    body << "<rect x=\"" << num(width - right - 130) << "\" y=\"" << num(y - 9) << "\" width=\"10\" height=\"10\" fill=\""
         << kPalette[index % 7] << "\"/>\n";
    body << "<text x=\"" << num(width - right - 115) << "\" y=\"" << num(y) << "\" font-size=\"11\">" << xml_escape(label)
         << "</text>\n";
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
        << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\">\n";
    out << body.str();
    out << "</svg>\n";
  }
};

void write_curves_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "rule,iteration,n_seeds,mean_accuracy,std_accuracy,mean_procrustes,std_procrustes\n";
  for (const auto& p : points) {
    out << to_string(p.rule) << ',' << p.iteration << ',' << p.n << ',' << format_double(p.mean_accuracy) << ','
        << format_double(p.std_accuracy) << ',' << (p.mean_distance ? format_double(*p.mean_distance) : "") << ','
        << (p.std_distance ? format_double(*p.std_distance) : "") << '\n';
  }
}

void distance_plot(const std::filesystem::path& path, const std::vector<CurvePoint>& points) {
  Canvas c;
  c.x0 = 0.0;
  c.x1 = 1.0;
  c.y0 = 0.0;
  double ymax = 0.0;
  for (const auto& p : points) {
    if (p.mean_distance) ymax = std::max(ymax, *p.mean_distance + p.std_distance.value_or(0.0));
  }
  c.y1 = std::max(0.1, std::ceil(ymax * 10.0) / 10.0);
  c.axes("Procrustes distance vs normalized accuracy", "normalized accuracy", "Procrustes distance (rad)");
  std::map<int, std::vector<const CurvePoint*>> by_rule;
  for (const auto& p : points) {
    if (p.mean_distance) by_rule[static_cast<int>(p.rule)].push_back(&p);
  }
  int index = 0;
  for (const auto& [rule, pts] : by_rule) {
    const char* color = kPalette[index % 7];
    std::string poly;
    for (const CurvePoint* p : pts) {
      const double x = c.px(std::clamp(p->mean_accuracy, 0.0, 1.0));
      const double y = c.py(*p->mean_distance);
      poly += num(x) + "," + num(y) + " ";
      const double err = p->std_distance.value_or(0.0);
      c.body << "<line x1=\"" << num(x) << "\" y1=\"" << num(c.py(*p->mean_distance - err)) << "\" x2=\"" << num(x)
             << "\" y2=\"" << num(c.py(*p->mean_distance + err)) << "\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
      c.body << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
    c.body << "<polyline points=\"" << poly << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    c.legend(index, std::string(to_string(static_cast<Rule>(rule))));
    ++index;
  }
  c.save(path);
}

void gain_plot(const std::filesystem::path& path, const std::vector<SweepCell>& cells) {
  std::vector<double> gains;
  std::vector<Rule> rules;
  double ymax = 0.0;
  for (const auto& cell : cells) {
    if (std::find(gains.begin(), gains.end(), cell.gain) == gains.end()) gains.push_back(cell.gain);
    if (std::find(rules.begin(), rules.end(), cell.rule) == rules.end()) rules.push_back(cell.rule);
    if (cell.mean_distance) ymax = std::max(ymax, *cell.mean_distance + cell.std_distance.value_or(0.0));
  }
  std::sort(gains.begin(), gains.end());
  Canvas c;
  c.x0 = 0.0;
  c.x1 = static_cast<double>(gains.size());
  c.y0 = 0.0;
  c.y1 = std::max(0.1, std::ceil(ymax * 10.0) / 10.0);
  c.axes("Distance at matched accuracy by initial gain", "gain", "Procrustes distance (rad)");
  const double slot = 1.0 / static_cast<double>(rules.size() + 1);
  for (std::size_t g = 0; g < gains.size(); ++g) {
    c.body << "<text x=\"" << num(c.px(g + 0.5)) << "\" y=\"" << num(c.height - c.bottom + 32)
           << "\" font-size=\"11\" text-anchor=\"middle\">g=" << fmt(gains[g]) << "</text>\n";
    for (std::size_t r = 0; r < rules.size(); ++r) {
      const auto it = std::find_if(cells.begin(), cells.end(),
                                   [&](const SweepCell& s) { return s.gain == gains[g] && s.rule == rules[r]; });
      if (it == cells.end() || !it->mean_distance) continue;
      const double xl = c.px(g + slot * (r + 0.5));
      const double xr = c.px(g + slot * (r + 1.5));
      const double y = c.py(*it->mean_distance);
      c.body << "<rect x=\"" << num(xl) << "\" y=\"" << num(y) << "\" width=\"" << num(xr - xl) << "\" height=\""
             << num(c.py(0.0) - y) << "\" fill=\"" << kPalette[r % 7] << "\"/>\n";
      const double err = it->std_distance.value_or(0.0);
      const double xm = 0.5 * (xl + xr);
      c.body << "<line x1=\"" << num(xm) << "\" y1=\"" << num(c.py(*it->mean_distance - err)) << "\" x2=\"" << num(xm)
             << "\" y2=\"" << num(c.py(*it->mean_distance + err)) << "\" stroke=\"black\"/>\n";
    }
  }
  for (std::size_t r = 0; r < rules.size(); ++r) c.legend(static_cast<int>(r), std::string(to_string(rules[r])));
  c.save(path);
}

void eigen_plot(const std::filesystem::path& path,
                const std::vector<std::pair<std::string, std::vector<std::complex<double>>>>& spectra) {
  double radius = 1.0;
  for (const auto& [label, eig] : spectra)
    for (const auto& z : eig) radius = std::max(radius, std::abs(z));
  radius = std::ceil(radius * 1.1 * 10.0) / 10.0;
  Canvas c;
  c.width = 520;
  c.height = 520;
  c.x0 = -radius;
  c.x1 = radius;
  c.y0 = -radius;
  c.y1 = radius;
  c.axes("Recurrent weight eigenvalues", "real part", "imaginary part");
  c.body << "<ellipse cx=\"" << num(c.px(0)) << "\" cy=\"" << num(c.py(0)) << "\" rx=\"" << num(c.px(1) - c.px(0))
         << "\" ry=\"" << num(c.py(0) - c.py(1)) << "\" fill=\"none\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  int index = 0;
  for (const auto& [label, eig] : spectra) {
    for (const auto& z : eig) {
      c.body << "<circle cx=\"" << num(c.px(z.real())) << "\" cy=\"" << num(c.py(z.imag())) << "\" r=\"2\" fill=\""
             << kPalette[index % 7] << "\" fill-opacity=\"0.6\"/>\n";
    }
    c.legend(index, label);
    ++index;
  }
  c.save(path);
}

}  // namespace

ReportOutputs emit_report(const ReportInputs& inputs, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir)) throw std::runtime_error("cannot create " + out_dir.string());
  ReportOutputs out;

  const std::vector<CurvePoint> curves = aggregate_curves(inputs.traces);
  out.csv.push_back(out_dir / "curves.csv");
  write_curves_csv(out.csv.back(), curves);
  const bool has_distance =
      std::any_of(curves.begin(), curves.end(), [](const CurvePoint& p) { return p.mean_distance.has_value(); });
  if (has_distance) {
    out.svg.push_back(out_dir / "distance_vs_accuracy.svg");
    distance_plot(out.svg.back(), curves);
  }

  const bool has_sweep = std::any_of(inputs.sweep_cells.begin(), inputs.sweep_cells.end(),
                                     [](const SweepCell& c) { return c.mean_distance.has_value(); });
  if (has_sweep) {
    out.svg.push_back(out_dir / "gain_sweep.svg");
    gain_plot(out.svg.back(), inputs.sweep_cells);
  }

  if (!inputs.spectra.empty()) {
    out.csv.push_back(out_dir / "eigenvalues.csv");
    std::ofstream f(out.csv.back(), std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + out.csv.back().string());
    f << "label,real,imag\n";
    for (const auto& [label, eig] : inputs.spectra)
      for (const auto& z : eig) f << label << ',' << format_double(z.real()) << ',' << format_double(z.imag()) << '\n';
    out.svg.push_back(out_dir / "eigenvalues.svg");
    eigen_plot(out.svg.back(), inputs.spectra);
  }
  return out;
}

ReportInputs load_report_inputs(const std::filesystem::path& dir) {
  ReportInputs in;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    const std::string name = p.filename().string();
    const bool csv = p.extension() == ".csv";
    if (csv && name.rfind("trace_", 0) == 0) {
      in.traces.push_back(read_trace_csv(p));
    } else if (csv && name.rfind("eig_", 0) == 0) {
      std::ifstream f(p);
      in.spectra.emplace_back(name.substr(4, name.size() - 8), read_eigenspectrum_csv(f));
    } else if (name == "sweep.csv") {
      std::ifstream f(p);
      in.sweep_cells = read_sweep_csv(f);
    }
  }
  return in;
}

}  // namespace rulesim
