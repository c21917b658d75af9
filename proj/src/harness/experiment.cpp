#include "icil/harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "icil/common/error.hpp"
#include "icil/env/clinical.hpp"

namespace icil::harness {

namespace fs = std::filesystem;
using ad::Array;
using nlohmann::json;

MethodSpec parse_method(const std::string& name) {
  MethodSpec m;
  m.name = name;
  if (name == "icil") {
    m.icil = true;
    return m;
  }
  const std::string prefix = "icil-no-";
  if (name.rfind(prefix, 0) == 0) {
    m.icil = true;
    const std::string term = name.substr(prefix.size());
    if (term == "inv") m.losses.inv = false;
    else if (term == "dyn") m.losses.dyn = false;
    else if (term == "mi") m.losses.mi = false;
    else if (term == "energy") m.losses.energy = false;
    else throw ConfigError("unknown ICIL ablation '" + name + "'");
    return m;
  }
  m.baseline = learner::baseline_from_string(name);
  return m;
}

// ---- config ----

void ExperimentConfig::validate() const {
  if (task != env::Task::cartpole && task != env::Task::offline_clinical) {
    throw ConfigError("experiment: task must be cartpole or offline-clinical");
  }
  if (seeds == 0) throw ConfigError("experiment: seeds must be >= 1");
  if (rollout_episodes == 0) throw ConfigError("experiment: rollout_episodes must be >= 1");
  if (constants_episodes == 0) throw ConfigError("experiment: constants_episodes must be >= 1");
  if (trajectories.empty()) throw ConfigError("experiment: trajectory grid is empty");
  for (auto n : trajectories) {
    if (n == 0) throw ConfigError("experiment: trajectory counts must be >= 1");
  }
  if (task == env::Task::cartpole) {
    if (noise_dims.empty()) throw ConfigError("experiment: noise_dims is empty");
    for (auto d : noise_dims) {
      if (d == 0) throw ConfigError("experiment: noise dims must be >= 1");
    }
  } else {
    if (train_agreement.size() < 2) throw ConfigError("experiment: need at least two training agreements");
    for (double p : train_agreement) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("experiment: agreement outside [0,1]");
    }
    if (!(test_agreement >= 0.0 && test_agreement <= 1.0)) throw ConfigError("experiment: agreement outside [0,1]");
    if (test_trajectories == 0) throw ConfigError("experiment: test_trajectories must be >= 1");
  }
  if (heldout_trajectories == 0) throw ConfigError("experiment: heldout_trajectories must be >= 1");
  if (methods.empty()) throw ConfigError("experiment: methods list is empty");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    parse_method(m);
    if (!seen.insert(m).second) throw ConfigError("experiment: method '" + m + "' listed twice");
  }
  icil.validate();
  baseline.validate();
  ebm.validate();
}

json ExperimentConfig::to_json() const {
  return {{"task", env::to_string(task)},
          {"seed", seed},
          {"seeds", seeds},
          {"trajectories", trajectories},
          {"noise_dims", noise_dims},
          {"env_identifier", env_identifier},
          {"methods", methods},
          {"rollout_episodes", rollout_episodes},
          {"constants_episodes", constants_episodes},
          {"train_env_probe", train_env_probe},
          {"heldout_trajectories", heldout_trajectories},
          {"train_agreement", train_agreement},
          {"test_agreement", test_agreement},
          {"test_trajectories", test_trajectories},
          {"icil", icil.to_json()},
          {"baseline", baseline.to_json()},
          {"ebm", ebm.to_json()}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  const json defaults = c.to_json();
  for (const auto& [k, v] : j.items()) {
    if (!defaults.contains(k)) throw ConfigError("experiment config: unknown key '" + k + "'");
  }
  try {
    if (j.contains("task")) c.task = env::task_from_string(j.at("task").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.seeds = j.value("seeds", c.seeds);
    c.trajectories = j.value("trajectories", c.trajectories);
    c.noise_dims = j.value("noise_dims", c.noise_dims);
    c.env_identifier = j.value("env_identifier", c.env_identifier);
    c.methods = j.value("methods", c.methods);
    c.rollout_episodes = j.value("rollout_episodes", c.rollout_episodes);
    c.constants_episodes = j.value("constants_episodes", c.constants_episodes);
    c.train_env_probe = j.value("train_env_probe", c.train_env_probe);
    c.heldout_trajectories = j.value("heldout_trajectories", c.heldout_trajectories);
    c.train_agreement = j.value("train_agreement", c.train_agreement);
    c.test_agreement = j.value("test_agreement", c.test_agreement);
    c.test_trajectories = j.value("test_trajectories", c.test_trajectories);
    // Nested blocks merge over the defaults so a config can override one field.
    auto merged = [&](const char* key, const json& base) {
      json out = base;
      if (j.contains(key)) out.merge_patch(j.at(key));
      return out;
    };
    c.icil = learner::IcilConfig::from_json(merged("icil", defaults.at("icil")));
    c.baseline = learner::BaselineConfig::from_json(merged("baseline", defaults.at("baseline")));
    c.ebm = ebm::EbmConfig::from_json(merged("ebm", defaults.at("ebm")));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  if (c.task == env::Task::offline_clinical && !j.contains("noise_dims")) c.noise_dims = {};
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::string ExperimentConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json().dump())));
  return buf;
}

// ---- grid ----

std::string CellKey::id() const {
  return method + "_n" + std::to_string(n_traj) + "_d" + std::to_string(noise_dim) + "_s" + std::to_string(seed);
}

std::vector<CellKey> grid_cells(const ExperimentConfig& config) {
  // Data-major order so cells sharing a dataset (and its energy model) run together.
  const std::vector<std::size_t> dims =
      config.task == env::Task::cartpole ? config.noise_dims : std::vector<std::size_t>{0};
  std::vector<CellKey> cells;
  for (auto d : dims) {
    for (auto n : config.trajectories) {
      for (std::size_t s = 0; s < config.seeds; ++s) {
        for (const auto& m : config.methods) cells.push_back({m, n, d, config.seed + s});
      }
    }
  }
  return cells;
}

namespace {

std::optional<double> opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json or_null(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void write_atomically(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << text;
  }
  fs::rename(tmp, path);
}

std::uint64_t data_tag(const CellKey& k) { return (static_cast<std::uint64_t>(k.n_traj) << 32) ^ k.noise_dim; }

}  // namespace

json CellResult::to_json() const {
  return {{"method", key.method},
          {"n_traj", key.n_traj},
          {"noise_dim", key.noise_dim},
          {"seed", key.seed},
          {"config_hash", config_hash},
          {"raw_return", or_null(raw_return)},
          {"raw_se", or_null(raw_se)},
          {"scaled_return", or_null(scaled_return)},
          {"train_raw_return", or_null(train_raw_return)},
          {"train_scaled_return", or_null(train_scaled_return)},
          {"acc", or_null(acc)},
          {"auc", or_null(auc)},
          {"apr", or_null(apr)},
          {"classifier_entropy", or_null(classifier_entropy)}};
}

CellResult CellResult::from_json(const json& j) {
  CellResult r;
  try {
    r.key = {j.at("method").get<std::string>(), j.at("n_traj").get<std::size_t>(), j.at("noise_dim").get<std::size_t>(),
             j.at("seed").get<std::uint64_t>()};
    r.config_hash = j.at("config_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("cell result: ") + e.what());
  }
  r.raw_return = opt(j, "raw_return");
  r.raw_se = opt(j, "raw_se");
  r.scaled_return = opt(j, "scaled_return");
  r.train_raw_return = opt(j, "train_raw_return");
  r.train_scaled_return = opt(j, "train_scaled_return");
  r.acc = opt(j, "acc");
  r.auc = opt(j, "auc");
  r.apr = opt(j, "apr");
  r.classifier_entropy = opt(j, "classifier_entropy");
  return r;
}

CellData make_cell_data(const ExperimentConfig& config, const CellKey& key) {
  CellData d;
  const std::uint64_t n = key.n_traj, dim = key.noise_dim, s = key.seed;
  d.train_seed = derive_seed(s, "train", {n, dim});
  d.eval_seed = derive_seed(s, "eval", {n, dim});
  if (config.task == env::Task::cartpole) {
    const auto specs = env::cartpole_training_specs(key.noise_dim, config.env_identifier);
    d.train = env::generate_dataset(specs, key.n_traj, derive_seed(s, "data", {n, dim}));
    d.heldout = env::generate_dataset(specs, config.heldout_trajectories, derive_seed(s, "heldout", {n, dim}));
    // factors resampled per run, not per episode
    Rng rng(derive_seed(s, "test-env", {n, dim}));
    d.test = env::cartpole_test_spec(key.noise_dim, rng, config.env_identifier);
  } else {
    d.train = env::offline_clinical_dataset(key.n_traj, config.train_agreement, derive_seed(s, "data", {n}));
    d.heldout =
        env::offline_clinical_dataset(config.heldout_trajectories, config.train_agreement, derive_seed(s, "heldout", {n}));
    d.test_data = env::offline_clinical_dataset(config.test_trajectories, {config.test_agreement},
                                                derive_seed(s, "test-data", {n}), 99);
  }
  return d;
}

TaskConstants task_constants(const ExperimentConfig& config, const fs::path& out) {
  if (config.task != env::Task::cartpole) return {};
  const fs::path path = out / "constants.json";
  if (fs::exists(path)) {
    std::ifstream in(path);
    const TaskConstants c = TaskConstants::from_json(json::parse(in));
    if (c.episodes == config.constants_episodes && c.seed == config.seed) return c;
  }
  const TaskConstants c = measure_cartpole_constants(config.constants_episodes, config.seed);
  if (!out.empty()) {
    fs::create_directories(out);
    write_atomically(path, c.to_json().dump(2) + "\n");
  }
  return c;
}

namespace {

ebm::EnergyModel energy_model_for(const ExperimentConfig& config, const CellKey& key, const env::Dataset& train,
                                  const fs::path& cache) {
  fs::path path;
  if (!cache.empty()) {
    path = cache / ("ebm_n" + std::to_string(key.n_traj) + "_d" + std::to_string(key.noise_dim) + "_s" +
                    std::to_string(key.seed) + ".ckpt");
    if (fs::exists(path)) return ebm::EnergyModel::load(path);
  }
  auto result = ebm::train_ebm(env::flatten(train), config.ebm, derive_seed(key.seed, "ebm", {data_tag(key)}));
  if (!path.empty()) {
    fs::create_directories(cache);
    const fs::path tmp = path.string() + ".tmp";
    result.model.save(tmp);
    fs::rename(tmp, path);
  }
  return std::move(result.model);
}

Array observations_of(const env::Dataset& ds) {
  const env::TransitionTable t = env::flatten(ds);
  return Array::matrix(t.size(), t.dim, t.observations);
}

}  // namespace

CellResult run_cell(const ExperimentConfig& config, const CellKey& key, const TaskConstants& constants,
                    const fs::path& ebm_cache, const fs::path& history_csv) {
  const MethodSpec method = parse_method(key.method);
  const CellData data = make_cell_data(config, key);
  CellResult r;
  r.key = key;
  r.config_hash = config.hash();

  learner::LogitFn policy;
  learner::IcilModel icil_model;
  learner::BaselinePolicy baseline_policy;
  if (method.icil) {
    learner::IcilConfig cfg = config.icil;
    cfg.losses = method.losses;
    std::optional<ebm::EnergyModel> energy;
    if (cfg.losses.energy) energy = energy_model_for(config, key, data.train, ebm_cache);
    auto run = learner::train_icil(data.train, energy ? &*energy : nullptr, cfg, data.train_seed);
    if (!history_csv.empty()) learner::write_loss_history_csv(run.history, history_csv);
    icil_model = std::move(run.model);
    policy = [&icil_model](const Array& obs) { return icil_model.logits(obs); };
    r.classifier_entropy = icil_model.classifier_entropy(observations_of(data.heldout));
  } else {
    auto run = learner::train_baseline(method.baseline, data.train, config.baseline, data.train_seed);
    if (!history_csv.empty()) {
      std::ofstream out(history_csv);
      out.precision(17);
      out << "iter,loss\n";
      for (std::size_t i = 0; i < run.loss.size(); ++i) out << i << ',' << run.loss[i] << '\n';
    }
    baseline_policy = std::move(run.policy);
    policy = [&baseline_policy](const Array& obs) { return baseline_policy.logits(obs); };
  }

  if (data.test) {
    const ReturnStats test = run_rollout_eval(policy, *data.test, config.rollout_episodes, data.eval_seed);
    r.raw_return = test.mean;
    r.raw_se = test.standard_error;
    r.scaled_return = scale_return(test.mean, constants.r_random, constants.r_expert);
    if (config.train_env_probe) {
      double total = 0.0;
      for (const auto& spec : data.train.specs) {
        total += run_rollout_eval(policy, spec, config.rollout_episodes,
                                  derive_seed(data.eval_seed, "train-env", {static_cast<std::uint64_t>(spec.env_id)}))
                     .mean;
      }
      r.train_raw_return = total / static_cast<double>(data.train.specs.size());
      r.train_scaled_return = scale_return(*r.train_raw_return, constants.r_random, constants.r_expert);
    }
  } else {
    const ActionMatching m = action_matching(policy, *data.test_data);
    r.acc = m.acc;
    r.auc = m.auc;
    r.apr = m.apr;
  }
  return r;
}

MatrixSummary run_matrix(const ExperimentConfig& config, const fs::path& out, std::ostream* log) {
  config.validate();
  const fs::path cells_dir = out / "cells";
  fs::create_directories(cells_dir);
  const fs::path config_path = out / "config.json";
  if (fs::exists(config_path)) {
    if (ExperimentConfig::load(config_path).hash() != config.hash()) {
      throw ConfigError("output directory '" + out.string() + "' holds results of a different config");
    }
  } else {
    write_atomically(config_path, config.to_json().dump(2) + "\n");
  }
  const TaskConstants constants = task_constants(config, out);

  MatrixSummary summary;
  for (const CellKey& key : grid_cells(config)) {
    const fs::path marker = cells_dir / (key.id() + ".json");
    const fs::path error = cells_dir / (key.id() + ".error.json");
    if (fs::exists(marker)) {
      ++summary.skipped;
      continue;
    }
    fs::remove(error);
    const auto start = std::chrono::steady_clock::now();
    try {
      const CellResult r = run_cell(config, key, constants, out / "ebm", cells_dir / (key.id() + ".loss.csv"));
      write_atomically(marker, r.to_json().dump(2) + "\n");
      ++summary.completed;
      if (log) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        *log << "cell " << key.id() << " done";
        if (r.scaled_return) *log << ": scaled " << *r.scaled_return;
        if (r.acc) *log << ": acc " << *r.acc << " auc " << *r.auc;
        *log << " (" << secs << " s)" << std::endl;
      }
    } catch (const std::exception& e) {
      ++summary.failed;
      const json j = {{"cell", key.id()}, {"error", e.what()}};
      write_atomically(error, j.dump(2) + "\n");
      if (log) *log << "cell " << key.id() << " failed: " << e.what() << std::endl;
    }
  }
  if (!load_cells(out).empty()) write_report(out);
  return summary;
}

ExperimentConfig ablation_config(ExperimentConfig base) {
  base.methods = {"icil", "icil-no-inv", "icil-no-dyn", "icil-no-mi", "icil-no-energy"};
  return base;
}

ExperimentConfig noise_sweep_config(ExperimentConfig base) {
  base.noise_dims = {3, 6, 9, 12};
  base.trajectories = {5};
  return base;
}

// ---- report ----

Aggregate aggregate(const std::vector<double>& values) {
  const ReturnStats s = summarize(values);
  return {values.size(), s.mean, s.standard_error};
}

std::vector<CellResult> load_cells(const fs::path& dir) {
  const fs::path cells_dir = dir / "cells";
  std::vector<CellResult> out;
  if (!fs::is_directory(cells_dir)) return out;
  for (const auto& entry : fs::directory_iterator(cells_dir)) {
    const std::string name = entry.path().filename().string();
    const bool is_json = name.size() > 5 && name.ends_with(".json");
    if (!is_json || name.ends_with(".error.json")) continue;
    std::ifstream in(entry.path());
    try {
      out.push_back(CellResult::from_json(json::parse(in)));
    } catch (const json::exception& e) {
      throw FormatError("cannot parse '" + entry.path().string() + "': " + e.what());
    }
  }
  std::sort(out.begin(), out.end(), [](const CellResult& a, const CellResult& b) { return a.key < b.key; });
  return out;
}

namespace {

std::string num(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

using Metric = std::optional<double> CellResult::*;
const std::vector<std::pair<std::string, Metric>>& metrics() {
  static const std::vector<std::pair<std::string, Metric>> m = {
      {"raw_return", &CellResult::raw_return},
      {"scaled_return", &CellResult::scaled_return},
      {"train_raw_return", &CellResult::train_raw_return},
      {"train_scaled_return", &CellResult::train_scaled_return},
      {"acc", &CellResult::acc},
      {"auc", &CellResult::auc},
      {"apr", &CellResult::apr},
      {"classifier_entropy", &CellResult::classifier_entropy}};
  return m;
}

void write_text(const fs::path& path, const std::string& text) { write_atomically(path, text); }

}  // namespace

std::vector<CellResult> write_report(const fs::path& dir) {
  const std::vector<CellResult> cells = load_cells(dir);
  if (cells.empty()) throw ConfigError("report: no completed cells under '" + dir.string() + "'");

  std::string tidy = "method,n_traj,noise_dim,seed";
  for (const auto& [name, _] : metrics()) tidy += "," + name;
  tidy += ",config_hash\n";
  for (const auto& c : cells) {
    tidy += c.key.method + "," + std::to_string(c.key.n_traj) + "," + std::to_string(c.key.noise_dim) + "," +
            std::to_string(c.key.seed);
    for (const auto& [_, field] : metrics()) tidy += "," + num(c.*field);
    tidy += "," + c.config_hash + "\n";
  }
  write_text(dir / "tidy.csv", tidy);

  // group by (method, n_traj, noise_dim), method order as first seen in sorted cells
  std::map<std::tuple<std::string, std::size_t, std::size_t>, std::vector<const CellResult*>> groups;
  for (const auto& c : cells) groups[{c.key.method, c.key.n_traj, c.key.noise_dim}].push_back(&c);

  std::string header = "method,n_traj,noise_dim,seeds";
  for (const auto& [name, _] : metrics()) header += "," + name + "_mean," + name + "_se";
  header += ",config_hashes\n";
  std::string summary = header;
  std::map<std::string, std::string> plots;
  for (const auto& [k, members] : groups) {
    const auto& [method, n, d] = k;
    std::string row = method + "," + std::to_string(n) + "," + std::to_string(d) + "," + std::to_string(members.size());
    for (const auto& [_, field] : metrics()) {
      std::vector<double> v;
      for (const auto* c : members) {
        if (c->*field) v.push_back(*(c->*field));
      }
      if (v.empty()) {
        row += ",,";
      } else {
        const Aggregate a = aggregate(v);
        row += "," + num(a.mean) + "," + num(a.se);
      }
    }
    std::set<std::string> hashes;
    for (const auto* c : members) hashes.insert(c->config_hash);
    std::string joined;
    for (const auto& h : hashes) joined += (joined.empty() ? "" : ";") + h;
    row += "," + joined + "\n";
    summary += row;
    auto& plot = plots[method];
    if (plot.empty()) plot = header;
    plot += row;
  }
  write_text(dir / "summary.csv", summary);
  fs::create_directories(dir / "plot");
  for (const auto& [method, text] : plots) write_text(dir / "plot" / (method + ".csv"), text);
  return cells;
}

}  // namespace icil::harness
