#include "rulesim/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "rulesim/errors.hpp"

namespace rulesim {

int default_workers() {
  if (const char* env = std::getenv("RULESIM_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  if (workers <= 0) workers = default_workers();
  workers = std::min(workers, count);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto work = [&] {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

ExperimentConfig job_config(const ExperimentConfig& base, const SweepJob& job) {
  ExperimentConfig c = base;
  c.rule.rule = job.rule;
  c.network.gain = job.gain;
  c.training.lr = job.lr;
  c.training.seed = job.seed;
  return c;
}

std::string cell_label(const SweepCell& cell) {
  return std::string(to_string(cell.rule)) + "@gain=" + format_double(cell.gain);
}

SweepResult run_gain_sweep(const ExperimentConfig& base, const ResponseMatrix& reference, int workers) {
  base.validate();
  const SweepSettings& s = base.sweep;
  SweepResult result;
  result.target_accuracy = s.target_accuracy;

  std::vector<SweepJob> jobs;
  for (Rule rule : s.rules)
    for (double gain : s.gains)
      for (double lr : s.learning_rates)
        for (Seed seed : s.seeds) jobs.push_back({rule, gain, lr, seed});

  result.runs.resize(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), workers, [&](int i) {
    const SweepJob& job = jobs[static_cast<std::size_t>(i)];
    SweepRun run;
    run.job = job;
    run.trace = run_training(job_config(base, job), &reference).trace;
    run.distance = distance_at_accuracy(run.trace, s.target_accuracy);
    run.final_accuracy = run.trace.rows.back().accuracy;
    result.runs[static_cast<std::size_t>(i)] = std::move(run);
  });

  for (Rule rule : s.rules) {
    for (double gain : s.gains) {
      // Learning-rate selection for this (rule, gain).
      std::size_t best = 0;
      int best_reached = -1;
      double best_accuracy = -1.0;
      for (std::size_t k = 0; k < s.learning_rates.size(); ++k) {
        int reached = 0;
        double acc = 0.0;
        for (const SweepRun& r : result.runs) {
          if (r.job.rule != rule || r.job.gain != gain || r.job.lr != s.learning_rates[k]) continue;
          reached += r.distance.has_value();
          acc += r.final_accuracy;
        }
        if (reached > best_reached || (reached == best_reached && acc > best_accuracy)) {
          best = k;
          best_reached = reached;
          best_accuracy = acc;
        }
      }
      SweepCell cell;
      cell.rule = rule;
      cell.gain = gain;
      cell.lr = s.learning_rates[best];
      std::vector<double> untrained;
      for (const SweepRun& r : result.runs) {
        if (r.job.rule != rule || r.job.gain != gain || r.job.lr != cell.lr) continue;
        ++cell.n_seeds;
        if (r.distance) cell.distances.push_back(*r.distance);
        if (r.trace.rows.front().procrustes) untrained.push_back(*r.trace.rows.front().procrustes);
      }
      if (!cell.distances.empty()) {
        cell.mean_distance = mean(cell.distances);
        cell.std_distance = sample_std(cell.distances);
      }
      if (!untrained.empty()) cell.mean_untrained = mean(untrained);
      result.cells.push_back(std::move(cell));
    }
  }

  const auto compare = [&](const SweepCell& a, const SweepCell& b) {
    if (a.distances.size() < 2 || b.distances.size() < 2) return;
    result.comparisons.push_back({cell_label(a), cell_label(b), student_t_test(a.distances, b.distances)});
  };
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    for (std::size_t j = i + 1; j < result.cells.size(); ++j) {
      const SweepCell& a = result.cells[i];
      const SweepCell& b = result.cells[j];
      if (a.gain == b.gain || a.rule == b.rule) compare(a, b);
    }
  }
  return result;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "rule,gain,lr,n_seeds,n_reached,mean_distance,std_distance,mean_untrained,status\n";
  for (const SweepCell& c : result.cells) {
    out << to_string(c.rule) << ',' << format_double(c.gain) << ',' << format_double(c.lr) << ',' << c.n_seeds << ','
        << c.distances.size() << ',' << opt(c.mean_distance) << ',' << opt(c.std_distance) << ','
        << opt(c.mean_untrained) << ',' << (c.unreachable() ? "unreachable" : "ok") << '\n';
  }
}

std::vector<SweepCell> read_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("rule,gain,lr,", 0) != 0) throw IngestionError("missing sweep header", 1);
  std::vector<SweepCell> cells;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream fields(line);
    while (std::getline(fields, field, ',')) f.push_back(field);
    if (f.size() != 9) throw IngestionError("expected 9 fields", line_no);
    try {
      SweepCell c;
      c.rule = parse_rule(f[0]);
      c.gain = std::stod(f[1]);
      c.lr = std::stod(f[2]);
      c.n_seeds = std::stoi(f[3]);
      const int reached = std::stoi(f[4]);
      if (!f[5].empty()) c.mean_distance = std::stod(f[5]);
      if (!f[6].empty()) c.std_distance = std::stod(f[6]);
      if (!f[7].empty()) c.mean_untrained = std::stod(f[7]);
      // Individual distances are not stored; keep the count with the mean.
      if (c.mean_distance) c.distances.assign(static_cast<std::size_t>(reached), *c.mean_distance);
      cells.push_back(std::move(c));
    } catch (const IngestionError&) {
      throw;
    } catch (const std::exception& e) {
      throw IngestionError(std::string("bad sweep row: ") + e.what(), line_no);
    }
  }
  return cells;
}

void write_sweep_outputs(const SweepResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto open = [&](const char* name) {
    std::ofstream f(out_dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (out_dir / name).string());
    return f;
  };
  {
    auto f = open("sweep.csv");
    write_sweep_csv(f, result);
  }
  {
    auto f = open("sweep_runs.csv");
    f << "rule,gain,lr,seed,final_accuracy,distance_at_target,untrained_distance\n";
    for (const SweepRun& r : result.runs) {
      f << to_string(r.job.rule) << ',' << format_double(r.job.gain) << ',' << format_double(r.job.lr) << ','
        << r.job.seed << ',' << format_double(r.final_accuracy) << ',' << opt(r.distance) << ','
        << opt(r.trace.rows.front().procrustes) << '\n';
    }
  }
  {
    auto f = open("sweep_tests.csv");
    f << "first,second,t,dof,p_value\n";
    for (const CellComparison& c : result.comparisons) {
      f << c.first << ',' << c.second << ',' << format_double(c.test.statistic) << ',' << format_double(c.test.dof)
        << ',' << format_double(c.test.p_value) << '\n';
    }
  }
  {
    auto f = open("sweep_notes.txt");
    f << "Distances are read at normalized accuracy " << format_double(result.target_accuracy)
      << " by linear interpolation of each training trace.\n"
      << "The reference is a surrogate response matrix, so absolute distances are not comparable with values\n"
      << "measured against recorded neural data; only orderings between cells are meaningful.\n"
      << "t-tests are two-sample Student tests, uncorrected for multiple comparisons.\n";
  }
}

std::vector<GalleryEntry> default_gallery(const ExperimentConfig& base) {
  std::vector<GalleryEntry> out;
  const auto add = [&](std::string label, Rule rule, bool random_feedback) {
    RuleSettings r = base.rule;
    r.rule = rule;
    r.random_feedback = random_feedback;
    out.push_back({std::move(label), r});
  };
  add("bptt", Rule::bptt, false);
  add("tbptt", Rule::tbptt, false);
  add("eprop", Rule::eprop, false);
  add("eprop_fa", Rule::eprop, true);
  if (base.network.activation == Activation::relu && base.network.dale) add("modprop", Rule::modprop, false);
  add("nodep", Rule::node_perturbation, false);
  add("es", Rule::evolution_strategies, false);
  return out;
}

std::vector<GalleryRun> run_rule_gallery(const ExperimentConfig& base, const std::vector<GalleryEntry>& entries,
                                         const ResponseMatrix* reference, int workers) {
  std::vector<GalleryRun> runs(entries.size());
  parallel_for(static_cast<int>(entries.size()), workers, [&](int i) {
    const GalleryEntry& e = entries[static_cast<std::size_t>(i)];
    ExperimentConfig c = base;
    c.rule = e.rule;
    GalleryRun run;
    run.label = e.label;
    run.result = run_training(c, reference);
    run.eigenvalues = weight_eigenspectrum(run.result.final_params);
    runs[static_cast<std::size_t>(i)] = std::move(run);
  });
  return runs;
}

void write_eigenspectrum_csv(std::ostream& out, const std::vector<std::complex<double>>& eigenvalues) {
  out << "real,imag\n";
  for (const auto& z : eigenvalues) out << format_double(z.real()) << ',' << format_double(z.imag()) << '\n';
}

std::vector<std::complex<double>> read_eigenspectrum_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "real,imag") throw IngestionError("missing eigenvalue header", 1);
  std::vector<std::complex<double>> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IngestionError("expected real,imag", line_no);
    try {
      out.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw IngestionError("unparseable eigenvalue", line_no);
    }
  }
  return out;
}

std::vector<SimilarityScore> run_compare(const std::filesystem::path& a, const std::filesystem::path& b, int cca_rank) {
  const ResponseMatrix ma = read_response_matrix(a);
  const ResponseMatrix mb = read_response_matrix(b);
  if (ma.data.rows() != mb.data.rows()) {
    throw ShapeError("row counts differ: " + std::to_string(ma.data.rows()) + " vs " + std::to_string(mb.data.rows()));
  }
  return similarity_scores(ma, mb, cca_rank);
}

}  // namespace rulesim
