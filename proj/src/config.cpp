#include "rulesim/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "rulesim/errors.hpp"
#include "rulesim/random.hpp"
#include "rulesim/response_matrix.hpp"

namespace rulesim {

namespace pt = boost::property_tree;

ExperimentConfig default_config(TaskKind kind) {
  ExperimentConfig c;
  c.task.kind = kind;
  if (kind == TaskKind::context_integration) {
    c.task.dt = 50.0;
    c.network.tau_m = 100.0;
    c.network.n_units = 400;
    c.training.iterations = 3000;
  } else {
    c.task.dt = 10.0;
    c.network.tau_m = 50.0;
    c.network.n_units = 200;
    c.training.iterations = 1000;
  }
  c.network.dt = c.task.dt;
  c.network.n_inputs = task_inputs(c.task);
  c.network.n_outputs = task_outputs(c.task);
  return c;
}

namespace {

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, double>) out += format_double(xs[i]);
    else out += std::to_string(xs[i]);
  }
  return out;
}

std::string join_rules(const std::vector<Rule>& rules) {
  std::string out;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    if (i) out += ',';
    out += to_string(rules[i]);
  }
  return out;
}

std::string b2s(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string ExperimentConfig::canonical() const {
  std::map<std::string, std::string> kv;
  const auto d = [](double v) { return format_double(v); };
  kv["network.n_units"] = std::to_string(network.n_units);
  kv["network.tau_m"] = d(network.tau_m);
  kv["network.activation"] = std::string(to_string(network.activation));
  kv["network.noise_std"] = d(network.noise_std);
  kv["network.gain"] = d(network.gain);
  kv["network.input_scale"] = d(network.input_scale);
  kv["network.dale"] = b2s(network.dale);
  kv["network.excitatory_fraction"] = d(network.excitatory_fraction);
  kv["network.connection_density"] = d(network.connection_density);

  kv["task.kind"] = std::string(to_string(task.kind));
  kv["task.dt"] = d(task.dt);
  kv["task.fixation_ms"] = d(task.fixation_ms);
  kv["task.stimulus_ms"] = d(task.stimulus_ms);
  kv["task.delay_ms"] = d(task.delay_ms);
  kv["task.decision_ms"] = d(task.decision_ms);
  kv["task.coherences"] = join(task.coherences);
  kv["task.stimulus_noise"] = d(task.stimulus_noise);
  kv["task.reach_conditions"] = std::to_string(task.reach_conditions);
  kv["task.condition_code_dim"] = std::to_string(task.condition_code_dim);
  kv["task.muscles"] = std::to_string(task.muscles);
  kv["task.preparation_ms"] = d(task.preparation_ms);
  kv["task.movement_ms"] = d(task.movement_ms);
  kv["task.bumps_per_muscle"] = std::to_string(task.bumps_per_muscle);
  kv["task.bump_width_min_ms"] = d(task.bump_width_min_ms);
  kv["task.bump_width_max_ms"] = d(task.bump_width_max_ms);
  kv["task.code_after_onset"] = b2s(task.code_after_onset);
  kv["task.seed"] = std::to_string(task.seed);

  kv["training.iterations"] = std::to_string(training.iterations);
  kv["training.batch_size"] = std::to_string(training.batch_size);
  kv["training.lr"] = d(training.lr);
  kv["training.eval_every"] = std::to_string(training.eval_every);
  kv["training.clip_norm"] = d(training.clip_norm);
  kv["training.seed"] = std::to_string(training.seed);
  kv["training.eval_trials_per_condition"] = std::to_string(training.eval_trials_per_condition);

  kv["rule.rule"] = std::string(to_string(rule.rule));
  kv["rule.truncation_K"] = std::to_string(rule.truncation_window);
  kv["rule.sigma"] = d(rule.np_sigma);
  kv["rule.es_sigma"] = d(rule.es_sigma);
  kv["rule.es_samples"] = std::to_string(rule.es_samples);
  kv["rule.mu"] = d(rule.mu);
  kv["rule.s_max"] = std::to_string(rule.s_max);
  kv["rule.feedback"] = rule.random_feedback ? "random" : "exact";

  kv["similarity.cca_rank"] = std::to_string(similarity.cca_rank);
  kv["similarity.activity"] = similarity.use_rates ? "rates" : "states";

  kv["sweep.rules"] = join_rules(sweep.rules);
  kv["sweep.gains"] = join(sweep.gains);
  kv["sweep.learning_rates"] = join(sweep.learning_rates);
  kv["sweep.seeds"] = join(sweep.seeds);
  kv["sweep.target_accuracy"] = d(sweep.target_accuracy);

  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::string ExperimentConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical())));
  return buf;
}

void ExperimentConfig::validate() const {
  leak_factor(network.dt, network.tau_m);
  if (network.n_units <= 0) throw ConfigError("network.n_units must be positive");
  if (network.n_inputs != task_inputs(task) || network.n_outputs != task_outputs(task)) {
    throw ConfigError("network input/output widths do not match the task");
  }
  if (network.dt != task.dt) throw ConfigError("network dt must equal task dt");
  if (training.iterations < 0) throw ConfigError("training.iterations must be non-negative");
  if (training.batch_size <= 0) throw ConfigError("training.batch_size must be positive");
  if (!(training.lr > 0.0)) throw ConfigError("training.lr must be positive");
  if (training.eval_every <= 0) throw ConfigError("training.eval_every must be positive");
  if (training.eval_trials_per_condition <= 0) throw ConfigError("training.eval_trials_per_condition must be positive");
  if (rule.rule == Rule::tbptt) {
    const int t_steps = epoch_layout(task).total;
    if (rule.truncation_window < 1 || rule.truncation_window > t_steps) {
      throw ConfigError("rule.truncation_K must lie in [1, " + std::to_string(t_steps) + "]");
    }
  }
  if (!(rule.np_sigma > 0.0) || !(rule.es_sigma > 0.0)) throw ConfigError("rule.sigma values must be positive");
  if (rule.es_samples < 1) throw ConfigError("rule.es_samples must be at least 1");
  if (rule.s_max < 1) throw ConfigError("rule.s_max must be at least 1");
  if (rule.rule == Rule::modprop && (network.activation != Activation::relu || !network.dale)) {
    throw ConfigError("modprop requires activation = relu and dale = true");
  }
  if (similarity.cca_rank < 1) throw ConfigError("similarity.cca_rank must be at least 1");
  if (sweep.rules.empty() || sweep.gains.empty() || sweep.learning_rates.empty() || sweep.seeds.empty()) {
    throw ConfigError("sweep lists must be nonempty");
  }
  if (training.iterations > 0 && training.iterations < training.eval_every) {
    throw ConfigError("training.iterations must be at least training.eval_every");
  }
}

namespace {

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size()) {
    throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  }
  return v;
}

long long to_int(const std::string& key, const std::string& value) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size()) {
    throw ConfigError("'" + key + "' expects an integer, got '" + value + "'");
  }
  return v;
}

int to_int32(const std::string& key, const std::string& value) {
  const long long v = to_int(key, value);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError("'" + key + "' is out of range");
  }
  return static_cast<int>(v);
}

Seed to_seed(const std::string& key, const std::string& value) {
  Seed v = 0;
  const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size()) {
    throw ConfigError("'" + key + "' expects an unsigned 64-bit seed, got '" + value + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("empty item in list '" + value + "'");
    out.push_back(item.substr(b, e - b + 1));
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

std::vector<double> to_doubles(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& s : split_list(value)) out.push_back(to_double(key, s));
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.message() + " (line " + std::to_string(e.line()) +
                      ")");
  }

  // Task kind first: it selects the defaults everything else overrides.
  TaskKind kind = TaskKind::reach_emg;
  if (const auto task = tree.get_child_optional("task")) {
    if (const auto k = task->get_optional<std::string>("kind")) kind = parse_task_kind(*k);
  }
  ExperimentConfig c = default_config(kind);

  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError("key '" + section + "' appears outside any section");
    for (const auto& [key, node] : body) {
      const std::string value = node.get_value<std::string>();
      const std::string full = section + "." + key;
      if (section == "network") {
        if (key == "n_units") c.network.n_units = to_int32(full, value);
        else if (key == "tau_m") c.network.tau_m = to_double(full, value);
        else if (key == "activation") c.network.activation = parse_activation(value);
        else if (key == "noise_std") c.network.noise_std = to_double(full, value);
        else if (key == "gain") c.network.gain = to_double(full, value);
        else if (key == "input_scale") c.network.input_scale = to_double(full, value);
        else if (key == "dale") c.network.dale = to_bool(full, value);
        else if (key == "excitatory_fraction") c.network.excitatory_fraction = to_double(full, value);
        else if (key == "connection_density") c.network.connection_density = to_double(full, value);
        else throw ConfigError("unknown key '" + full + "'");
      } else if (section == "task") {
        if (key == "kind") {}
        else if (key == "dt") c.task.dt = to_double(full, value);
        else if (key == "fixation_ms") c.task.fixation_ms = to_double(full, value);
        else if (key == "stimulus_ms") c.task.stimulus_ms = to_double(full, value);
        else if (key == "delay_ms") c.task.delay_ms = to_double(full, value);
        else if (key == "decision_ms") c.task.decision_ms = to_double(full, value);
        else if (key == "coherences") c.task.coherences = to_doubles(full, value);
        else if (key == "stimulus_noise") c.task.stimulus_noise = to_double(full, value);
        else if (key == "reach_conditions") c.task.reach_conditions = to_int32(full, value);
        else if (key == "condition_code_dim") c.task.condition_code_dim = to_int32(full, value);
        else if (key == "muscles") c.task.muscles = to_int32(full, value);
        else if (key == "preparation_ms") c.task.preparation_ms = to_double(full, value);
        else if (key == "movement_ms") c.task.movement_ms = to_double(full, value);
        else if (key == "bumps_per_muscle") c.task.bumps_per_muscle = to_int32(full, value);
        else if (key == "bump_width_min_ms") c.task.bump_width_min_ms = to_double(full, value);
        else if (key == "bump_width_max_ms") c.task.bump_width_max_ms = to_double(full, value);
        else if (key == "code_after_onset") c.task.code_after_onset = to_bool(full, value);
        else if (key == "seed") c.task.seed = to_seed(full, value);
        else throw ConfigError("unknown key '" + full + "'");
      } else if (section == "training") {
        if (key == "iterations") c.training.iterations = to_int32(full, value);
        else if (key == "batch_size") c.training.batch_size = to_int32(full, value);
        else if (key == "lr") c.training.lr = to_double(full, value);
        else if (key == "eval_every") c.training.eval_every = to_int32(full, value);
        else if (key == "clip_norm") c.training.clip_norm = to_double(full, value);
        else if (key == "seed") c.training.seed = to_seed(full, value);
        else if (key == "eval_trials_per_condition") c.training.eval_trials_per_condition = to_int32(full, value);
        else throw ConfigError("unknown key '" + full + "'");
      } else if (section == "rule") {
        if (key == "rule") c.rule.rule = parse_rule(value);
        else if (key == "truncation_K") c.rule.truncation_window = to_int32(full, value);
        else if (key == "sigma") c.rule.np_sigma = to_double(full, value);
        else if (key == "es_sigma") c.rule.es_sigma = to_double(full, value);
        else if (key == "es_samples") c.rule.es_samples = to_int32(full, value);
        else if (key == "mu") c.rule.mu = to_double(full, value);
        else if (key == "s_max") c.rule.s_max = to_int32(full, value);
        else if (key == "feedback") {
          if (value == "exact") c.rule.random_feedback = false;
          else if (value == "random") c.rule.random_feedback = true;
          else throw ConfigError("rule.feedback must be exact or random, got '" + value + "'");
        } else throw ConfigError("unknown key '" + full + "'");
      } else if (section == "similarity") {
        if (key == "cca_rank") c.similarity.cca_rank = to_int32(full, value);
        else if (key == "activity") {
          if (value == "rates") c.similarity.use_rates = true;
          else if (value == "states") c.similarity.use_rates = false;
          else throw ConfigError("similarity.activity must be rates or states, got '" + value + "'");
        } else throw ConfigError("unknown key '" + full + "'");
      } else if (section == "sweep") {
        if (key == "rules") {
          c.sweep.rules.clear();
          for (const auto& r : split_list(value)) c.sweep.rules.push_back(parse_rule(r));
        } else if (key == "gains") c.sweep.gains = to_doubles(full, value);
        else if (key == "learning_rates") c.sweep.learning_rates = to_doubles(full, value);
        else if (key == "seeds") {
          c.sweep.seeds.clear();
          for (const auto& s : split_list(value)) c.sweep.seeds.push_back(to_seed(full, s));
        } else if (key == "target_accuracy") c.sweep.target_accuracy = to_double(full, value);
        else throw ConfigError("unknown key '" + full + "'");
      } else {
        throw ConfigError("unknown section [" + section + "]");
      }
    }
  }
  c.network.dt = c.task.dt;
  c.network.n_inputs = task_inputs(c.task);
  c.network.n_outputs = task_outputs(c.task);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file " + path.string());
  return parse_config(in);
}

}  // namespace rulesim
