// Command-line front end: data generation, training, evaluation and the
// experiment grids. Every subcommand takes --config, --seed and --out; all
// randomness flows from --seed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "icil/ad/checkpoint.hpp"
#include "icil/common/error.hpp"
#include "icil/env/dataset.hpp"
#include "icil/harness/eval.hpp"
#include "icil/harness/experiment.hpp"
#include "icil/learner/baselines.hpp"
#include "icil/learner/icil.hpp"

namespace fs = std::filesystem;
using namespace icil;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "experiment config (JSON)");
  cmd->add_option("--seed", c.seed, "root seed (overrides the config)");
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (out_required) out->required();
}

harness::ExperimentConfig load_config(const Common& c) {
  harness::ExperimentConfig cfg = c.config.empty() ? harness::ExperimentConfig{} : harness::ExperimentConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::uint64_t seed_of(const Common& c, const harness::ExperimentConfig& cfg) { return c.seed.value_or(cfg.seed); }

fs::path prepare(const Common& c) {
  fs::create_directories(c.out);
  return c.out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- gen-data ----

int gen_data(const Common& c, std::optional<std::size_t> n_traj, std::optional<std::size_t> noise_dim) {
  const auto cfg = load_config(c);
  const fs::path out = prepare(c);
  harness::CellKey key;
  key.n_traj = n_traj.value_or(cfg.trajectories.front());
  key.noise_dim = cfg.task == env::Task::cartpole ? noise_dim.value_or(cfg.noise_dims.front()) : 0;
  key.seed = seed_of(c, cfg);
  const harness::CellData data = harness::make_cell_data(cfg, key);
  env::save_dataset(data.train, out / "train.bin");
  env::export_dataset_csv(data.train, out / "train.csv");
  env::save_dataset(data.heldout, out / "heldout.bin");
  if (data.test) write_json(out / "test_spec.json", env::to_json(*data.test));
  if (data.test_data) {
    env::save_dataset(*data.test_data, out / "test.bin");
    env::export_dataset_csv(*data.test_data, out / "test.csv");
  }
  std::cout << "wrote " << data.train.transition_count() << " training transitions to " << out << "\n";
  return 0;
}

// ---- train-ebm ----

int train_ebm_cmd(const Common& c, const std::string& data_path) {
  const auto cfg = load_config(c);
  const fs::path out = prepare(c);
  const env::Dataset ds = env::load_dataset(data_path);
  const auto result = ebm::train_ebm(env::flatten(ds), cfg.ebm, seed_of(c, cfg));
  result.model.save(out / "ebm.ckpt");
  std::ofstream log(out / "ebm_loss.csv");
  log.precision(17);
  log << "iter,loss,energy_gap\n";
  for (std::size_t i = 0; i < result.log.loss.size(); ++i) {
    log << i << ',' << result.log.loss[i] << ',' << result.log.energy_gap[i] << '\n';
  }
  std::cout << "energy model saved to " << (out / "ebm.ckpt") << " (" << result.log.divergent_chains
            << " divergent chains)\n";
  return 0;
}

// ---- train ----

int train_cmd(const Common& c, const std::string& method_name, const std::string& data_path,
              const std::string& ebm_path) {
  const auto cfg = load_config(c);
  const fs::path out = prepare(c);
  const harness::MethodSpec method = harness::parse_method(method_name);
  const env::Dataset ds = env::load_dataset(data_path);
  const std::uint64_t seed = seed_of(c, cfg);
  if (method.icil) {
    learner::IcilConfig icfg = cfg.icil;
    icfg.losses = method.losses;
    std::optional<ebm::EnergyModel> energy;
    if (icfg.losses.energy) {
      if (!ebm_path.empty()) {
        energy = ebm::EnergyModel::load(ebm_path);
      } else {
        energy = ebm::train_ebm(env::flatten(ds), cfg.ebm, derive_seed(seed, "ebm")).model;
        energy->save(out / "ebm.ckpt");
      }
    }
    const auto run = learner::train_icil(ds, energy ? &*energy : nullptr, icfg, seed);
    run.model.save(out / "model.ckpt", icfg);
    learner::write_loss_history_csv(run.history, out / "loss.csv");
  } else {
    const auto run = learner::train_baseline(method.baseline, ds, cfg.baseline, seed);
    run.policy.save(out / "model.ckpt", {{"method", method.name}, {"config", cfg.baseline.to_json()}});
    std::ofstream log(out / "loss.csv");
    log.precision(17);
    log << "iter,loss\n";
    for (std::size_t i = 0; i < run.loss.size(); ++i) log << i << ',' << run.loss[i] << '\n';
  }
  std::cout << method.name << " model saved to " << (out / "model.ckpt") << "\n";
  return 0;
}

// ---- eval ----

learner::LogitFn load_policy(const fs::path& path) {
  const auto meta = json::parse(ad::load_checkpoint(path).metadata);
  const std::string kind = meta.value("kind", "");
  if (kind == "icil") {
    auto model = std::make_shared<learner::IcilModel>(learner::IcilModel::load(path));
    return [model](const ad::Array& x) { return model->logits(x); };
  }
  if (kind == "baseline") {
    auto policy = std::make_shared<learner::BaselinePolicy>(learner::BaselinePolicy::load(path));
    return [policy](const ad::Array& x) { return policy->logits(x); };
  }
  throw FormatError("'" + path.string() + "' is not a policy checkpoint");
}

int eval_cmd(const Common& c, const std::string& model_path, const std::string& spec_path,
             const std::string& test_data_path, bool sample) {
  const auto cfg = load_config(c);
  const fs::path out = prepare(c);
  const learner::LogitFn policy = load_policy(model_path);
  if (!spec_path.empty()) {
    std::ifstream in(spec_path);
    if (!in) throw ConfigError("cannot read test spec '" + spec_path + "'");
    const env::EnvironmentSpec spec = env::spec_from_json(json::parse(in));
    const auto constants = harness::task_constants(cfg, out);
    const auto stats = harness::run_rollout_eval(policy, spec, cfg.rollout_episodes, seed_of(c, cfg),
                                                 sample ? learner::ActMode::sample : learner::ActMode::greedy);
    std::ofstream ep(out / "episodes.csv");
    ep << "episode,return\n";
    for (std::size_t i = 0; i < stats.returns.size(); ++i) ep << i << ',' << num(stats.returns[i]) << '\n';
    const double scaled = harness::scale_return(stats.mean, constants.r_random, constants.r_expert);
    std::ofstream summary(out / "eval.csv");
    summary << "raw_return,raw_se,scaled_return,r_random,r_expert,episodes\n"
            << num(stats.mean) << ',' << num(stats.standard_error) << ',' << num(scaled) << ','
            << num(constants.r_random) << ',' << num(constants.r_expert) << ',' << stats.returns.size() << '\n';
    std::cout << "return " << stats.mean << " +- " << stats.standard_error << " (scaled " << scaled << ")\n";
  } else if (!test_data_path.empty()) {
    const auto m = harness::action_matching(policy, env::load_dataset(test_data_path));
    std::ofstream summary(out / "eval.csv");
    summary << "acc,auc,apr\n" << num(m.acc) << ',' << num(m.auc) << ',' << num(m.apr) << '\n';
    std::cout << "acc " << m.acc << " auc " << m.auc << " apr " << m.apr << "\n";
  } else {
    throw ConfigError("eval: pass --test-spec (online) or --test-data (offline)");
  }
  return 0;
}

// ---- grids ----

int grid_cmd(const Common& c, harness::ExperimentConfig (*variant)(harness::ExperimentConfig)) {
  auto cfg = load_config(c);
  if (variant) cfg = variant(cfg);
  const auto s = harness::run_matrix(cfg, c.out, &std::cerr);
  std::cout << s.completed << " cells run, " << s.skipped << " already done, " << s.failed << " failed\n";
  return s.failed == 0 ? 0 : 3;
}

int report_cmd(const Common& c) {
  const auto cells = harness::write_report(c.out);
  std::cout << "report over " << cells.size() << " cells written to " << c.out << "\n";
  return 0;
}

const char* kind_of(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const ShapeError*>(&e)) return "ShapeError";
  if (dynamic_cast<const NumericError*>(&e)) return "NumericError";
  if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
  if (dynamic_cast<const Error*>(&e)) return "Error";
  return "InternalError";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invariant causal imitation learning: experiments and tools"};
  app.require_subcommand(1);

  Common gen, ebm_c, train, eval, matrix, ablate, sweep, report;
  std::optional<std::size_t> n_traj, noise_dim;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate demonstrations and the test environment");
  add_common(gen_cmd, gen);
  gen_cmd->add_option("--trajectories", n_traj, "trajectories per training env (default: first grid entry)");
  gen_cmd->add_option("--noise-dim", noise_dim, "noise dimensions (default: first noise_dims entry)");

  std::string data_path, ebm_path, method, model_path, spec_path, test_data_path;
  bool sample = false;
  auto* ebm_cmd = app.add_subcommand("train-ebm", "pre-train the energy model on demonstrations");
  add_common(ebm_cmd, ebm_c);
  ebm_cmd->add_option("--data", data_path, "dataset file from gen-data")->required();

  auto* train_cmd_ = app.add_subcommand("train", "train one method");
  add_common(train_cmd_, train);
  train_cmd_->add_option("--method", method, "icil|bc|rcal|bc-irm|rcal-irm|icil-no-{inv,dyn,mi,energy}")->required();
  train_cmd_->add_option("--data", data_path, "dataset file from gen-data")->required();
  train_cmd_->add_option("--ebm", ebm_path, "pre-trained energy model (ICIL; trained inline if absent)");

  auto* eval_cmd_ = app.add_subcommand("eval", "evaluate a trained policy");
  add_common(eval_cmd_, eval);
  eval_cmd_->add_option("--model", model_path, "checkpoint from train")->required();
  eval_cmd_->add_option("--test-spec", spec_path, "test environment JSON (online rollouts)");
  eval_cmd_->add_option("--test-data", test_data_path, "offline test dataset (action matching)");
  eval_cmd_->add_flag("--sample", sample, "sample actions instead of greedy selection");

  auto* matrix_cmd = app.add_subcommand("matrix", "run the method x trajectories x seed grid");
  add_common(matrix_cmd, matrix);
  auto* ablate_cmd = app.add_subcommand("ablate", "ICIL with each loss term removed in turn");
  add_common(ablate_cmd, ablate);
  auto* sweep_cmd = app.add_subcommand("noise-sweep", "noise dims {3,6,9,12} at 5 trajectories");
  add_common(sweep_cmd, sweep);
  auto* report_cmd_ = app.add_subcommand("report", "rebuild tidy/summary/plot CSVs of a results directory");
  add_common(report_cmd_, report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen_cmd) return gen_data(gen, n_traj, noise_dim);
    if (*ebm_cmd) return train_ebm_cmd(ebm_c, data_path);
    if (*train_cmd_) return train_cmd(train, method, data_path, ebm_path);
    if (*eval_cmd_) return eval_cmd(eval, model_path, spec_path, test_data_path, sample);
    if (*matrix_cmd) return grid_cmd(matrix, nullptr);
    if (*ablate_cmd) return grid_cmd(ablate, &harness::ablation_config);
    if (*sweep_cmd) return grid_cmd(sweep, &harness::noise_sweep_config);
    if (*report_cmd_) return report_cmd(report);
  } catch (const std::exception& e) {
    const json err = {{"error", {{"type", kind_of(e)}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  }
  return 1;
}
