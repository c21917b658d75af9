#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "icil/ad/mlp.hpp"
#include "icil/env/dataset.hpp"
#include "icil/env/standardizer.hpp"
#include "icil/learner/common.hpp"

namespace icil::learner {

enum class BaselineKind { bc, rcal, bc_irm, rcal_irm };
std::string to_string(BaselineKind k);
BaselineKind baseline_from_string(const std::string& s);
bool uses_irm(BaselineKind k) noexcept;
bool uses_rcal(BaselineKind k) noexcept;

// plain: pi(x). phi_augmented: pi(phi(x)) with the same phi/pi shapes and
// names as ICIL, which is what makes the L_pi-only ablation comparable.
enum class PolicyArch { plain, phi_augmented };

struct BaselineConfig {
  double learning_rate = 0.001;
  std::size_t batch = 64;
  std::size_t iterations = 10000;
  std::size_t hidden_dim = 64;
  std::size_t hidden_layers = 2;
  double rcal_coeff = 0.01;
  double irm_penalty = 1.0;  // lambda_penalty
  PolicyArch arch = PolicyArch::plain;
  std::size_t state_dim = 0;  // phi output width for phi_augmented; 0 = base-state dim

  void validate() const;
  nlohmann::json to_json() const;
  static BaselineConfig from_json(const nlohmann::json& j);
};

class BaselinePolicy {
 public:
  BaselinePolicy() = default;
  BaselinePolicy(std::size_t obs_dim, std::size_t action_count, env::Standardizer standardizer, PolicyArch arch,
                 std::size_t state_dim, std::size_t hidden_dim, std::size_t hidden_layers, std::uint64_t seed);

  // Logits of already-standardized inputs; differentiable.
  ad::Var forward(const ad::Var& x) const;
  ad::Array logits(const ad::Array& raw) const;
  int act(std::span<const double> raw, ActMode mode = ActMode::greedy, Rng* rng = nullptr) const;

  std::size_t obs_dim() const noexcept { return obs_dim_; }
  std::size_t action_count() const noexcept { return action_count_; }
  PolicyArch arch() const noexcept { return arch_; }
  const env::Standardizer& standardizer() const noexcept { return standardizer_; }

  ad::Mlp phi;  // unused for the plain architecture
  ad::Mlp pi;

  std::vector<ad::ParameterStore*> stores();
  std::vector<const ad::ParameterStore*> stores() const;

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
  static BaselinePolicy load(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

 private:
  std::size_t obs_dim_ = 0;
  std::size_t action_count_ = 0;
  std::size_t state_dim_ = 0;
  env::Standardizer standardizer_;
  PolicyArch arch_ = PolicyArch::plain;
};

// Standardized transitions with env tags, laid out env block by env block.
struct PolicyBatch {
  ad::Var x;
  ad::Var x_next;  // undefined when next observations are unavailable
  std::vector<int> actions;
  std::vector<std::uint8_t> terminal;
  std::vector<int> env_index;

  std::size_t size() const noexcept { return actions.size(); }
};

PolicyBatch make_policy_batch(const BaselinePolicy& policy, const env::TransitionTable& table,
                              std::span<const std::size_t> rows, std::span<const int> env_index);
// Rows [begin, end) of a batch.
PolicyBatch slice(const PolicyBatch& batch, std::size_t begin, std::size_t end);

ad::Var bc_loss(const BaselinePolicy& policy, const PolicyBatch& batch);

// Implied rewards Q(x,a) - gamma max_a' Q(x',a') with logits read as Q;
// terminal rows keep Q(x,a). Returns [n,1].
ad::Var implied_reward(const ad::Var& q, const ad::Var& q_next, std::span<const int> actions,
                       std::span<const std::uint8_t> terminal, double gamma);
ad::Var rcal_loss(const BaselinePolicy& policy, const PolicyBatch& batch, double gamma, double coeff);

// Risk of one env block with the logits multiplied by a scalar w.
ad::Var scaled_risk(const BaselinePolicy& policy, const PolicyBatch& block, BaselineKind kind, double w,
                    double gamma, double coeff);
// d risk / d w at w = 1, closed form, differentiable in the policy parameters.
ad::Var risk_scale_gradient(const BaselinePolicy& policy, const PolicyBatch& block, BaselineKind kind, double gamma,
                            double coeff);
// Sum over env blocks of the squared scale gradient. Needs at least two envs.
ad::Var irm_penalty(const BaselinePolicy& policy, const PolicyBatch& batch, BaselineKind kind, double gamma,
                    double coeff);

// Full training objective for one batch.
ad::Var baseline_objective(const BaselinePolicy& policy, const PolicyBatch& batch, BaselineKind kind,
                           const BaselineConfig& config, double gamma);

struct BaselineResult {
  BaselinePolicy policy;
  std::vector<double> loss;
};

BaselineResult train_baseline(BaselineKind kind, const env::Dataset& dataset, const BaselineConfig& config,
                              std::uint64_t seed);

}  // namespace icil::learner
