// rulesim command line: experiments on leaky RNNs trained with different
// credit-assignment rules.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rulesim/config.hpp"
#include "rulesim/errors.hpp"
#include "rulesim/report.hpp"
#include "rulesim/response_matrix.hpp"
#include "rulesim/similarity.hpp"
#include "rulesim/sweep.hpp"
#include "rulesim/toy1d.hpp"
#include "rulesim/training.hpp"

namespace fs = std::filesystem;
using namespace rulesim;

namespace {

constexpr int kConfigExit = 2;
constexpr int kIngestionExit = 3;

struct Common {
  std::string config;
  std::string task = "reach";
  std::optional<Seed> seed;
  std::string reference;
  std::string out;
};

fs::path out_dir(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("RULESIM_OUT_DIR"); env && *env) return env;
  return "rulesim_out";
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? default_config(parse_task_kind(c.task)) : load_config(c.config);
  if (c.seed) cfg.training.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::optional<ResponseMatrix> load_reference(const Common& c) {
  if (c.reference.empty()) return std::nullopt;
  ResponseMatrix m = read_response_matrix(fs::path(c.reference));
  m.validate();
  return m;
}

void add_common(CLI::App* app, Common& c, bool with_reference) {
  app->add_option("--config", c.config, "INI configuration file");
  app->add_option("--task", c.task, "task defaults when no config is given (reach|context)");
  app->add_option("--seed", c.seed, "training seed override");
  if (with_reference) app->add_option("--reference", c.reference, "reference response matrix CSV");
  app->add_option("--out", c.out, "output directory (default $RULESIM_OUT_DIR or ./rulesim_out)");
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + item + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

void print_row(const TraceRow& r) {
  std::cout << "iteration " << r.iteration << "  accuracy " << format_double(r.accuracy);
  if (r.procrustes) std::cout << "  procrustes " << format_double(*r.procrustes);
  std::cout << '\n';
}

int cmd_train(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const auto reference = load_reference(c);
  const TrainingResult result = run_training(cfg, reference ? &*reference : nullptr);
  const PersistedRun files = persist_run(result, out_dir(c));
  print_row(result.trace.rows.front());
  print_row(result.trace.rows.back());
  std::cout << "trace " << files.trace.string() << '\n';
  return 0;
}

int cmd_sweep(const Common& c, int workers) {
  const ExperimentConfig cfg = load(c);
  const auto reference = load_reference(c);
  if (!reference) throw ConfigError("sweep needs --reference");
  const SweepResult result = run_gain_sweep(cfg, *reference, workers);
  const fs::path dir = out_dir(c);
  write_sweep_outputs(result, dir);
  ReportInputs inputs;
  for (const SweepRun& r : result.runs) inputs.traces.push_back(r.trace);
  inputs.sweep_cells = result.cells;
  emit_report(inputs, dir);
  write_sweep_csv(std::cout, result);
  return 0;
}

int cmd_gallery(const Common& c, int workers) {
  const ExperimentConfig cfg = load(c);
  const auto reference = load_reference(c);
  const auto runs = run_rule_gallery(cfg, default_gallery(cfg), reference ? &*reference : nullptr, workers);
  const fs::path dir = out_dir(c);
  fs::create_directories(dir);
  ReportInputs inputs;
  for (const GalleryRun& run : runs) {
    std::ofstream trace(dir / ("trace_" + run.label + ".csv"), std::ios::binary);
    write_trace_csv(trace, run.result.trace);
    std::ofstream eig(dir / ("eig_" + run.label + ".csv"), std::ios::binary);
    write_eigenspectrum_csv(eig, run.eigenvalues);
    inputs.traces.push_back(run.result.trace);
    inputs.spectra.emplace_back(run.label, run.eigenvalues);
    std::cout << run.label << ": final accuracy " << format_double(run.result.trace.rows.back().accuracy) << '\n';
  }
  emit_report(inputs, dir);
  return 0;
}

int cmd_compare(const std::string& a, const std::string& b, int rank) {
  const auto scores = run_compare(a, b, rank);
  std::cout << "measure,convention,value,centered,padded_to\n";
  for (const auto& s : scores) {
    std::cout << to_string(s.measure) << ',' << to_string(s.convention) << ',' << format_double(s.value) << ','
              << (s.centered ? "true" : "false") << ',' << s.padded_to << '\n';
  }
  return 0;
}

struct ToyArgs {
  std::string coeffs = "1,-1,-2";
  std::string rule = "eprop";
  double tau = 1.0;
  std::optional<double> w0;
  std::string grid;
  double dt = 1e-3;
  long steps = 1'000'000;
  bool scan = false;
  std::string out;
};

int cmd_toy(const ToyArgs& a) {
  IntegrationSettings settings;
  settings.dt = a.dt;
  settings.max_steps = a.steps;
  if (a.scan) {
    const std::vector<double> values{-2, -1, 0, 1, 2};
    const std::vector<double> w0s{-3, -2, -1, -0.5, 0, 0.5, 1, 2, 3};
    for (Verdict v : {Verdict::converged, Verdict::diverged}) {
      const auto found = find_showcase(v, 3, values, w0s, settings);
      std::cout << to_string(v) << ": ";
      if (!found) {
        std::cout << "none\n";
        continue;
      }
      for (double x : found->problem.coeffs) std::cout << format_double(x) << ' ';
      std::cout << "W0=" << format_double(found->w0) << " W_end=" << format_double(found->result.w_final) << '\n';
    }
    return 0;
  }
  ToyProblem problem{parse_list(a.coeffs), a.tau};
  const ToyRule rule = parse_toy_rule(a.rule);
  if (!a.grid.empty()) {
    const std::vector<double> grid = parse_list(a.grid);
    const auto scan = basin_scan(problem, rule, grid, settings);
    std::cout << "w0,verdict,w_final,steps\n";
    for (const auto& p : scan) {
      std::cout << format_double(p.w0) << ',' << to_string(p.result.verdict) << ',' << format_double(p.result.w_final)
                << ',' << p.result.steps << '\n';
    }
    for (double b : basin_boundaries(scan)) std::cout << "# boundary near " << format_double(b) << '\n';
    return 0;
  }
  const FlowResult r = integrate_flow(problem, a.w0.value_or(0.0), rule, settings);
  std::cout << "verdict " << to_string(r.verdict) << "  W_end " << format_double(r.w_final) << "  steps " << r.steps
            << "  J_end " << format_double(r.final_jacobian) << "  sign_hypothesis "
            << (r.sign_hypothesis_held ? "held" : "violated") << '\n';
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream f(fs::path(a.out) / "toy_trajectory.csv", std::ios::binary);
    f << "step,w,yhat\n";
    for (std::size_t k = 0; k < r.trajectory.size(); ++k) {
      f << k << ',' << format_double(r.trajectory[k]) << ',' << format_double(poly_readout(problem, r.trajectory[k]).value)
        << '\n';
    }
  }
  return 0;
}

int cmd_report(const std::string& in, const Common& c) {
  const fs::path dir = out_dir(c);
  const ReportInputs inputs = load_report_inputs(in.empty() ? dir : fs::path(in));
  if (inputs.traces.empty() && inputs.sweep_cells.empty() && inputs.spectra.empty()) {
    throw IngestionError("no trace_*.csv, eig_*.csv or sweep.csv found", 0);
  }
  const ReportOutputs out = emit_report(inputs, dir);
  for (const auto& p : out.csv) std::cout << p.string() << '\n';
  for (const auto& p : out.svg) std::cout << p.string() << '\n';
  return 0;
}

struct TransformArgs {
  std::string input, output;
  std::optional<Seed> rotate, permute;
  double scale = 1.0;
};

int cmd_transform(const TransformArgs& a) {
  ResponseMatrix m = read_response_matrix(fs::path(a.input));
  const Eigen::Index n = m.data.cols();
  if (a.rotate) {
    Rng rng(*a.rotate);
    Matrix g(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i) g(i, j) = rng.normal();
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    m.data = m.data * q;
  }
  if (a.permute) {
    Rng rng(*a.permute);
    const auto order = sample_without_replacement(static_cast<int>(n), static_cast<int>(n), rng);
    Matrix p(m.data.rows(), n);
    for (Eigen::Index j = 0; j < n; ++j) p.col(j) = m.data.col(order[static_cast<std::size_t>(j)]);
    m.data = p;
  }
  m.data *= a.scale;
  write_response_matrix(fs::path(a.output), m);
  return 0;
}

struct SurrogateArgs {
  std::string output;
  int conditions = 27, steps = 186, units = 128, latent = 6;
  Seed seed = 11;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rulesim: learning-rule comparison laboratory for leaky RNNs"};
  app.require_subcommand(1);
  int workers = 0;
  app.add_option("--workers", workers, "worker threads for sweeps (default $RULESIM_WORKERS or all cores)");

  Common train_c, sweep_c, gallery_c, report_c, ref_c;
  add_common(app.add_subcommand("train", "train one network and write its trace"), train_c, true);
  add_common(app.add_subcommand("sweep", "gain x rule x seed sweep at matched accuracy"), sweep_c, true);
  add_common(app.add_subcommand("gallery", "train every rule from one initialization"), gallery_c, true);

  auto* compare = app.add_subcommand("compare", "similarity scores between two response files");
  std::string file_a, file_b;
  int rank = 20;
  compare->add_option("a", file_a)->required();
  compare->add_option("b", file_b)->required();
  compare->add_option("--cca-rank", rank, "components kept by CCA (default 20)");

  auto* toy = app.add_subcommand("toy", "1-D linear RNN flows");
  ToyArgs toy_args;
  toy->add_option("--coeffs", toy_args.coeffs, "x_1..x_T, comma separated");
  toy->add_option("--rule", toy_args.rule, "bptt or eprop");
  toy->add_option("--tau", toy_args.tau, "time constant of the weight flow");
  toy->add_option("--w0", toy_args.w0, "initial weight");
  toy->add_option("--grid", toy_args.grid, "comma-separated W0 values for a basin scan");
  toy->add_option("--dt", toy_args.dt, "RK4 step of the weight flow");
  toy->add_option("--steps", toy_args.steps, "step budget before the run is undecided");
  toy->add_flag("--scan", toy_args.scan, "search the coefficient grid for showcase instances");
  toy->add_option("--out", toy_args.out, "directory for toy_trajectory.csv");

  auto* report = app.add_subcommand("report", "CSV and SVG figures from a results directory");
  std::string report_in;
  report->add_option("--in", report_in, "directory holding trace_*.csv, eig_*.csv, sweep.csv (default: --out)");
  report->add_option("--out", report_c.out, "directory for the CSV and SVG figures");

  auto* transform = app.add_subcommand("transform", "rotate, permute or scale the units of a response file");
  TransformArgs tr;
  transform->add_option("input", tr.input)->required();
  transform->add_option("output", tr.output)->required();
  transform->add_option("--rotate", tr.rotate, "random orthogonal rotation from this seed");
  transform->add_option("--permute", tr.permute, "random unit permutation from this seed");
  transform->add_option("--scale", tr.scale);

  auto* surrogate = app.add_subcommand("surrogate", "write a structured synthetic population");
  SurrogateArgs sa;
  surrogate->add_option("output", sa.output)->required();
  surrogate->add_option("--conditions", sa.conditions, "conditions (default 27)");
  surrogate->add_option("--steps", sa.steps, "time steps per condition (default 186)");
  surrogate->add_option("--units", sa.units, "units (default 128)");
  surrogate->add_option("--latent", sa.latent, "latent dimension (default 6)");
  surrogate->add_option("--seed", sa.seed, "generator seed (default 11)");

  auto* make_ref = app.add_subcommand("reference", "train a BPTT network and write its evaluation responses");
  std::string ref_file;
  add_common(make_ref, ref_c, false);
  make_ref->add_option("output", ref_file)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigExit;
  }

  try {
    if (app.got_subcommand("train")) return cmd_train(train_c);
    if (app.got_subcommand("sweep")) return cmd_sweep(sweep_c, workers);
    if (app.got_subcommand("gallery")) return cmd_gallery(gallery_c, workers);
    if (app.got_subcommand("compare")) return cmd_compare(file_a, file_b, rank);
    if (app.got_subcommand("toy")) return cmd_toy(toy_args);
    if (app.got_subcommand("report")) return cmd_report(report_in, report_c);
    if (app.got_subcommand("transform")) return cmd_transform(tr);
    if (app.got_subcommand("surrogate")) {
      write_response_matrix(fs::path(sa.output),
                            surrogate_population(sa.conditions, sa.steps, sa.units, sa.latent, sa.seed));
      return 0;
    }
    if (app.got_subcommand("reference")) {
      ExperimentConfig cfg = load(ref_c);
      cfg.rule.rule = Rule::bptt;
      const TrainingResult result = run_training(cfg);
      ResponseMatrix m = evaluation_responses(result.final_params, cfg);
      m.source = "reference";
      write_response_matrix(fs::path(ref_file), m);
      std::cout << "reference accuracy " << format_double(result.trace.rows.back().accuracy) << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const IngestionError& e) {
    std::cerr << "ingestion error: " << e.what() << '\n';
    return kIngestionExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
