#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icil/ebm/ebm.hpp"
#include "icil/env/dataset.hpp"
#include "icil/env/spec.hpp"
#include "icil/harness/eval.hpp"
#include "icil/learner/baselines.hpp"
#include "icil/learner/icil.hpp"

namespace icil::harness {

// A method name as used in configs and reports: one of the baselines, "icil",
// or an ICIL ablation "icil-no-{inv,dyn,mi,energy}".
struct MethodSpec {
  std::string name;
  bool icil = false;
  learner::LossSwitches losses;
  learner::BaselineKind baseline = learner::BaselineKind::bc;
};
MethodSpec parse_method(const std::string& name);

struct ExperimentConfig {
  env::Task task = env::Task::cartpole;
  std::uint64_t seed = 0;  // cell seeds are seed, seed+1, ...
  std::size_t seeds = 10;
  std::vector<std::size_t> trajectories = {1, 5, 10, 15, 20};
  std::vector<std::size_t> noise_dims = {3};  // CartPole only
  bool env_identifier = false;
  std::vector<std::string> methods = {"bc", "rcal", "bc-irm", "rcal-irm", "icil"};
  std::size_t rollout_episodes = 300;
  std::size_t constants_episodes = 1000;
  bool train_env_probe = true;  // also roll out on the training envs
  std::size_t heldout_trajectories = 5;  // per training env, for classifier entropy

  // offline clinical fixture
  std::vector<double> train_agreement = {0.1, 0.2};
  double test_agreement = 0.8;
  std::size_t test_trajectories = 100;

  learner::IcilConfig icil;
  learner::BaselineConfig baseline;
  ebm::EbmConfig ebm;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  // Stable hex digest of the canonical JSON; stamped on every report row.
  std::string hash() const;
};

// Every cell of the (method x trajectories x noise-dim x seed) grid.
struct CellKey {
  std::string method;
  std::size_t n_traj = 0;
  std::size_t noise_dim = 0;
  std::uint64_t seed = 0;

  std::string id() const;  // file-name stem
  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};
std::vector<CellKey> grid_cells(const ExperimentConfig& config);

struct CellResult {
  CellKey key;
  std::string config_hash;
  // online tasks
  std::optional<double> raw_return, raw_se, scaled_return;
  std::optional<double> train_raw_return, train_scaled_return;
  // offline tasks
  std::optional<double> acc, auc, apr;
  // ICIL only: mean classifier entropy on held-out training-env data (nats)
  std::optional<double> classifier_entropy;

  nlohmann::json to_json() const;
  static CellResult from_json(const nlohmann::json& j);
};

// Per-cell fixtures. The same (n_traj, noise_dim, seed) gives every method the
// same demonstrations, test environment and training seed.
struct CellData {
  env::Dataset train;
  env::Dataset heldout;                      // fresh trajectories from the training envs
  std::optional<env::EnvironmentSpec> test;  // CartPole
  std::optional<env::Dataset> test_data;     // offline clinical
  std::uint64_t train_seed = 0;
  std::uint64_t eval_seed = 0;
};
CellData make_cell_data(const ExperimentConfig& config, const CellKey& key);

// Measured once per output directory and stored in constants.json.
TaskConstants task_constants(const ExperimentConfig& config, const std::filesystem::path& out);

// Trains and evaluates one cell. `ebm_cache` (may be empty) holds pre-trained
// energy models keyed by data; missing ones are trained and stored there.
CellResult run_cell(const ExperimentConfig& config, const CellKey& key, const TaskConstants& constants,
                    const std::filesystem::path& ebm_cache, const std::filesystem::path& history_csv = {});

struct MatrixSummary {
  std::size_t completed = 0;  // run now
  std::size_t skipped = 0;    // marker already present
  std::size_t failed = 0;
};

// Runs the whole grid under `out`: config.json, constants.json, cells/<id>.json
// markers (cells/<id>.error.json on failure), then the report files.
MatrixSummary run_matrix(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream* log = nullptr);

// Grid variants used by the CLI.
ExperimentConfig ablation_config(ExperimentConfig base);
ExperimentConfig noise_sweep_config(ExperimentConfig base);

struct Aggregate {
  std::size_t n = 0;
  double mean = 0.0;
  double se = 0.0;
};
Aggregate aggregate(const std::vector<double>& values);

// Reads cells/*.json under `dir` and writes tidy.csv, summary.csv and
// plot/<method>.csv. ConfigError when no cell has completed.
std::vector<CellResult> write_report(const std::filesystem::path& dir);
std::vector<CellResult> load_cells(const std::filesystem::path& dir);

}  // namespace icil::harness
