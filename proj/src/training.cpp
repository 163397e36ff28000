#include "rulesim/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rulesim/adam.hpp"
#include "rulesim/errors.hpp"
#include "rulesim/random.hpp"
#include "rulesim/similarity.hpp"
#include "rulesim/tasks.hpp"

namespace rulesim {

TrialBatch evaluation_set(const ExperimentConfig& config) {
  const int per_condition =
      config.task.kind == TaskKind::context_integration ? config.training.eval_trials_per_condition : 1;
  return evaluation_batch(config.task, per_condition, derive_seed(config.task.seed, "evaluation"));
}

ResponseMatrix evaluation_responses(const NetworkParams& params, const ExperimentConfig& config) {
  const TrialBatch batch = evaluation_set(config);
  const StateTrajectory traj = rnn_forward_noiseless(params, batch);
  return condition_averaged_responses(traj, batch.condition_ids, config.similarity.use_rates, "model");
}

namespace {

TraceRow evaluate(const NetworkParams& params, const TrialBatch& batch, const ExperimentConfig& config,
                  const ResponseMatrix* reference, int iteration) {
  TraceRow row;
  row.iteration = iteration;
  row.rule = config.rule.rule;
  row.seed = config.training.seed;
  const StateTrajectory traj = rnn_forward_noiseless(params, batch);
  row.loss = batch_loss(traj, batch);
  row.accuracy = std::isfinite(row.loss) ? normalized_accuracy(traj, batch) : 0.0;
  if (reference) {
    const ResponseMatrix model = condition_averaged_responses(traj, batch.condition_ids, config.similarity.use_rates, "model");
    try {
      row.procrustes = procrustes_distance(model, *reference);
      row.cka = cka_score(model, *reference);
      row.cca = cca_score(model, *reference, config.similarity.cca_rank);
    } catch (const DegenerateInputError&) {
      // A silent network has no defined distance; the row keeps empty fields.
    }
  }
  return row;
}

}  // namespace

TrainingResult run_training(const ExperimentConfig& config, const ResponseMatrix* reference) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const Seed seed = config.training.seed;

  TrainingResult result;
  result.trace.config_hash = config.hash();
  result.initial = init_params(config.network, seed);
  NetworkParams params = result.initial;

  const TrialBatch eval = evaluation_set(config);
  if (reference) {
    reference->validate();
    const int conditions = task_conditions(config.task);
    if (reference->n_conditions != conditions || reference->n_steps != eval.n_steps()) {
      throw ShapeError("reference has " + std::to_string(reference->n_conditions) + " conditions × " +
                       std::to_string(reference->n_steps) + " steps; the task needs " + std::to_string(conditions) +
                       " × " + std::to_string(eval.n_steps()));
    }
  }

  GradientEngine engine(config.rule, params, derive_seed(seed, "feedback"));
  AdamHyper hyper;
  hyper.lr = config.training.lr;
  AdamState adam = AdamState::for_params(params, hyper);

  const auto record = [&](int iteration) {
    result.trace.rows.push_back(evaluate(params, eval, config, reference, iteration));
    result.trace.wall_time.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  };

  const int iterations = config.training.iterations;
  for (int it = 0; it < iterations; ++it) {
    if (it % config.training.eval_every == 0) record(it);
    const auto index = static_cast<std::uint64_t>(it);
    const TrialBatch batch = generate_batch(config.task, config.training.batch_size, derive_seed(seed, "batch", index));
    GradientSet grads =
        engine.compute(params, batch, derive_seed(seed, "noise", index), derive_seed(seed, "perturbation", index));
    clip_global_norm(grads, config.training.clip_norm);
    adam_step(adam, params, grads);
  }
  if (result.trace.rows.empty() || result.trace.rows.back().iteration != iterations) record(iterations);

  result.final_params = std::move(params);
  return result;
}

namespace {

std::optional<double> interpolate_at(const TrainingTrace& trace, double target, bool want_distance) {
  const auto value = [&](const TraceRow& r) -> std::optional<double> {
    if (want_distance) return r.procrustes;
    return static_cast<double>(r.iteration);
  };
  if (trace.rows.empty()) return std::nullopt;
  if (trace.rows.front().accuracy >= target) return value(trace.rows.front());
  for (std::size_t k = 1; k < trace.rows.size(); ++k) {
    const TraceRow& lo = trace.rows[k - 1];
    const TraceRow& hi = trace.rows[k];
    if (lo.accuracy < target && hi.accuracy >= target) {
      const auto a = value(lo);
      const auto b = value(hi);
      if (!a || !b) return std::nullopt;
      const double w = (target - lo.accuracy) / (hi.accuracy - lo.accuracy);
      return *a + w * (*b - *a);
    }
  }
  return std::nullopt;
}

std::string optional_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

std::optional<double> distance_at_accuracy(const TrainingTrace& trace, double target) {
  return interpolate_at(trace, target, true);
}

std::optional<double> iterations_to_accuracy(const TrainingTrace& trace, double target) {
  return interpolate_at(trace, target, false);
}

void write_trace_csv(std::ostream& out, const TrainingTrace& trace) {
  out << "iteration,rule,seed,normalized_accuracy,loss,procrustes,cka,cca,config_hash\n";
  for (const TraceRow& r : trace.rows) {
    out << r.iteration << ',' << to_string(r.rule) << ',' << r.seed << ',' << format_double(r.accuracy) << ','
        << format_double(r.loss) << ',' << optional_field(r.procrustes) << ',' << optional_field(r.cka) << ','
        << optional_field(r.cca) << ',' << trace.config_hash << '\n';
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IngestionError("unparseable number '" + s + "'", line);
  }
}

std::optional<double> parse_optional(const std::string& s, std::size_t line) {
  if (s.empty()) return std::nullopt;
  return parse_number(s, line);
}

}  // namespace

TrainingTrace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("iteration,rule,seed,", 0) != 0) {
    throw IngestionError("missing trace header", 1);
  }
  TrainingTrace trace;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) throw IngestionError("expected 9 fields, found " + std::to_string(f.size()), line_no);
    TraceRow r;
    r.iteration = static_cast<int>(parse_number(f[0], line_no));
    try {
      r.rule = parse_rule(f[1]);
      r.seed = std::stoull(f[2]);
    } catch (const std::exception& e) {
      throw IngestionError(e.what(), line_no);
    }
    r.accuracy = parse_number(f[3], line_no);
    r.loss = parse_number(f[4], line_no);
    r.procrustes = parse_optional(f[5], line_no);
    r.cka = parse_optional(f[6], line_no);
    r.cca = parse_optional(f[7], line_no);
    if (!trace.rows.empty() && trace.rows.back().rule == r.rule && trace.rows.back().seed == r.seed &&
        r.iteration <= trace.rows.back().iteration) {
      throw IngestionError("iterations must increase within a series", line_no);
    }
    trace.config_hash = f[8];
    trace.rows.push_back(r);
  }
  return trace;
}

TrainingTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string(), 0);
  return read_trace_csv(in);
}

namespace {

void write_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  out << "# " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

}  // namespace

void write_params(std::ostream& out, const NetworkParams& params) {
  out << "# beta " << format_double(params.beta) << " activation " << to_string(params.activation) << '\n';
  write_matrix(out, "w_in", params.w_in);
  write_matrix(out, "w_rec", params.w_rec);
  write_matrix(out, "w_out", params.w_out);
}

PersistedRun persist_run(const TrainingResult& result, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  const std::string& hash = result.trace.config_hash;
  PersistedRun paths{out_dir / ("trace_" + hash + ".csv"), out_dir / ("params_" + hash + ".txt"),
                     out_dir / ("timing_" + hash + ".csv")};
  const auto open = [](const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
  };
  {
    auto f = open(paths.trace);
    write_trace_csv(f, result.trace);
  }
  {
    auto f = open(paths.params);
    write_params(f, result.final_params);
  }
  {
    auto f = open(paths.timing);
    f << "iteration,wall_time_s\n";
    for (std::size_t k = 0; k < result.trace.rows.size(); ++k) {
      f << result.trace.rows[k].iteration << ',' << format_double(result.trace.wall_time[k]) << '\n';
    }
  }
  return paths;
}

}  // namespace rulesim
