#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "icil/ad/mlp.hpp"
#include "icil/ebm/ebm.hpp"
#include "icil/env/dataset.hpp"
#include "icil/env/standardizer.hpp"
#include "icil/learner/common.hpp"
#include "icil/mine/mine.hpp"

namespace icil::learner {

struct LossSwitches {
  bool inv = true;
  bool dyn = true;
  bool mi = true;
  bool energy = true;

  friend bool operator==(const LossSwitches&, const LossSwitches&) = default;
};

struct IcilConfig {
  double learning_rate = 0.001;
  std::size_t batch = 64;
  std::size_t iterations = 10000;
  std::size_t state_dim = 0;  // d_s; 0 = base-state dim of the training specs
  std::size_t noise_dim = 0;  // d_eta; 0 = observation dim minus base dim (at least 1)
  double temperature = 1.0;
  std::size_t hidden_dim = 64;
  std::size_t hidden_layers = 2;
  LossSwitches losses;
  bool phi_sees_env_identifier = false;

  void validate() const;
  nlohmann::json to_json() const;
  static IcilConfig from_json(const nlohmann::json& j);
};

struct LossBreakdown {
  double l_inv = 0.0;
  double l_dyn = 0.0;
  double l_mi = 0.0;
  double l_pi = 0.0;
  double l_energy = 0.0;
  double l_c = 0.0;

  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

// Shapes fixed at construction; everything a checkpoint needs to rebuild the nets.
struct IcilLayout {
  std::size_t obs_dim = 0;
  std::size_t action_count = 2;
  std::vector<int> env_ids;  // training envs, ascending
  std::size_t state_dim = 0;
  std::size_t noise_dim = 0;
  bool has_env_identifier = false;
  bool phi_sees_env_identifier = false;
  std::size_t hidden_dim = 64;
  std::size_t hidden_layers = 2;

  std::size_t encoder_input_dim() const;
  nlohmann::json to_json() const;
  static IcilLayout from_json(const nlohmann::json& j);
};

class IcilModel {
 public:
  IcilModel() = default;
  IcilModel(IcilLayout layout, env::Standardizer standardizer, std::uint64_t seed);

  const IcilLayout& layout() const noexcept { return layout_; }
  const env::Standardizer& standardizer() const noexcept { return standardizer_; }
  std::size_t env_count() const noexcept { return layout_.env_ids.size(); }
  // Position of env_id among the training envs; ConfigError if unknown.
  std::size_t env_index(int env_id) const;

  // Standardized observations as seen by phi and mu (identifier column dropped if hidden).
  ad::Array encoder_input(const ad::Array& standardized) const;

  // Deployment path pi(phi(x)) on raw observations.
  ad::Array logits(const ad::Array& raw) const;
  int act(std::span<const double> raw, ActMode mode = ActMode::greedy, Rng* rng = nullptr) const;
  // Mean entropy (nats) of the env classifier on phi of raw observations.
  double classifier_entropy(const ad::Array& raw) const;
  ad::Array state_features(const ad::Array& raw) const;

  ad::Mlp phi;
  std::vector<ad::Mlp> mu;     // one per training env
  ad::Mlp g_s;
  std::vector<ad::Mlp> g_eta;  // one per training env
  ad::Mlp psi;
  ad::Mlp classifier;
  ad::Mlp pi;
  mine::StatisticsNetwork mine;

  std::vector<ad::ParameterStore*> stores();
  std::vector<const ad::ParameterStore*> stores() const;
  void zero_grad();

  void save(const std::filesystem::path& path, const IcilConfig& config) const;
  static IcilModel load(const std::filesystem::path& path, IcilConfig* config = nullptr);

 private:
  IcilLayout layout_;
  env::Standardizer standardizer_;
};

// A minibatch prepared for the losses: standardized tensors plus env tags.
struct IcilBatch {
  ad::Var x;       // [n, obs_dim] standardized
  ad::Var x_next;  // [n, obs_dim] standardized
  ad::Var encoder_x;
  std::vector<int> actions;
  std::vector<int> env_index;  // position among the model's training envs
  ad::Array actions_one_hot;

  std::size_t size() const noexcept { return actions.size(); }
  std::size_t distinct_envs() const;
};

IcilBatch make_batch(const IcilModel& model, const env::TransitionTable& table, std::span<const std::size_t> rows);

// Row runs of equal env index; per-env networks apply run by run.
struct EnvRun {
  std::size_t env = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};
std::vector<EnvRun> env_runs(std::span<const int> env_index);

// Applies nets[run.env] to each run of `x` and stacks the results.
ad::Var apply_per_env(const std::vector<ad::Mlp>& nets, const ad::Var& x, std::span<const EnvRun> runs,
                      ad::Params mode = ad::Params::live);

ad::Var encode_state(const IcilModel& model, const IcilBatch& batch);
ad::Var encode_noise(const IcilModel& model, const IcilBatch& batch);

// Mean negative classifier entropy; the classifier is frozen in this term.
ad::Var loss_inv(const IcilModel& model, const ad::Var& s, const IcilBatch& batch);
// Env cross-entropy on detached features.
ad::Var loss_classifier(const IcilModel& model, const ad::Var& s, const IcilBatch& batch);
ad::Var loss_dyn(const IcilModel& model, const ad::Var& s, const ad::Var& eta, const IcilBatch& batch);
ad::Var loss_mi(const IcilModel& model, const ad::Var& s, const ad::Var& eta, std::span<const std::size_t> perm,
                ad::Params mode = ad::Params::live);
ad::Var loss_pi(const IcilModel& model, const ad::Var& s, const IcilBatch& batch);

// Relaxed one-hot sample softmax((logits + g) / temperature).
ad::Var gumbel_action(const ad::Var& logits, double temperature, const ad::Array& noise);
ad::Var gumbel_action(const ad::Var& logits, double temperature, Rng& rng);

// Mean frozen-EBM energy of the next observation imagined under a relaxed
// policy action. Only pi receives gradient: s and eta enter detached and
// g_s, g_eta, psi run frozen.
ad::Var loss_energy(const IcilModel& model, const ebm::EnergyModel& energy_model, const ad::Var& s,
                    const ad::Var& eta, const IcilBatch& batch, double temperature, const ad::Array& noise);

// One training iteration: (a) descent for phi, mu, g_s, g_eta, psi and pi on
// their losses with the classifier and T held fixed; (b) classifier descent on
// the updated features; (c) ascent for T on the updated features with the same
// permutation. Disabled losses contribute nothing and report 0.
LossBreakdown icil_iteration(IcilModel& model, const IcilBatch& batch, const ebm::EnergyModel* energy_model,
                             const IcilConfig& config, std::span<const std::size_t> perm, const ad::Array& noise,
                             std::size_t iteration);

struct IcilResult {
  IcilModel model;
  std::vector<LossBreakdown> history;
};

// The energy model may be null only when the energy loss is switched off.
IcilResult train_icil(const env::Dataset& dataset, const ebm::EnergyModel* energy_model, const IcilConfig& config,
                      std::uint64_t seed);

void write_loss_history_csv(const std::vector<LossBreakdown>& history, const std::filesystem::path& path);

}  // namespace icil::learner
