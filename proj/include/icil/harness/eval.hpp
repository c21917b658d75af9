#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "icil/env/dataset.hpp"
#include "icil/env/spec.hpp"
#include "icil/learner/common.hpp"

namespace icil::harness {

struct ReturnStats {
  double mean = 0.0;
  double standard_error = 0.0;
  std::vector<double> returns;  // one per episode, episode order
};

// Mean and standard error (std / sqrt(n), population std with n-1) of values.
ReturnStats summarize(std::vector<double> values);

// Runs `episodes` CartPole episodes of `spec` side by side. Episode i draws its
// initial state (and sampled actions) from derive_seed(seed, "episode", {i}).
// Reward is 1 per step, including the step that ends the episode.
ReturnStats run_rollout_eval(const learner::LogitFn& policy, const env::EnvironmentSpec& spec,
                             std::size_t episodes, std::uint64_t seed,
                             learner::ActMode mode = learner::ActMode::greedy);

// (raw - r_random) / (r_expert - r_random); not clamped.
double scale_return(double raw, double r_random, double r_expert);

// Logit functions for reference policies on raw observations of `spec`.
// The expert reads the base block only; the uniform policy gives equal logits
// (use ActMode::sample for a random policy).
learner::LogitFn expert_logits(const env::EnvironmentSpec& spec);
learner::LogitFn uniform_logits(std::size_t actions);

struct TaskConstants {
  double r_random = 0.0;
  double r_expert = 0.0;
  std::size_t episodes = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static TaskConstants from_json(const nlohmann::json& j);
};

// Random and scripted-expert returns on the unaugmented CartPole.
TaskConstants measure_cartpole_constants(std::size_t episodes = 1000, std::uint64_t seed = 0);

struct ActionMatching {
  double acc = 0.0;
  double auc = 0.0;
  double apr = 0.0;
};

// Threshold sweep over distinct scores (ties share one step), trapezoidal area.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
double pr_auc(std::span<const double> scores, std::span<const int> labels);

// ACC of greedy actions, AUC/APR of the action-1 probability, over every
// transition in `test`. Binary actions only.
ActionMatching action_matching(const learner::LogitFn& policy, const env::Dataset& test);

}  // namespace icil::harness
