#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "icil/common/rng.hpp"

namespace icil::env {

enum class Task { cartpole, tabular, offline_clinical };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

// The augmentation map q: observation = [base, factors * base[source_indices]].
// Noise coordinate i copies base coordinate source_indices[i] scaled by
// factors[i]. Construction rejects zero factors so q stays invertible.
class InterventionSpec {
 public:
  InterventionSpec() = default;
  InterventionSpec(std::vector<double> factors, std::vector<std::size_t> source_indices);

  // `noise_dim` copies cycling over the last three CartPole coordinates
  // (velocity, angle, angular velocity), all scaled by `factor`.
  static InterventionSpec cartpole_uniform(std::size_t noise_dim, double factor);
  // Test-environment draw: each factor U(-1,1), redrawn while |f| < 0.05.
  static InterventionSpec cartpole_sampled(std::size_t noise_dim, Rng& rng);

  std::size_t noise_dim() const noexcept { return factors_.size(); }
  const std::vector<double>& factors() const noexcept { return factors_; }
  const std::vector<std::size_t>& source_indices() const noexcept { return source_indices_; }

  void validate_for(std::size_t base_dim) const;

  friend bool operator==(const InterventionSpec&, const InterventionSpec&) = default;

 private:
  std::vector<double> factors_;
  std::vector<std::size_t> source_indices_;
};

struct EnvironmentSpec {
  int env_id = 0;
  Task task = Task::cartpole;
  InterventionSpec intervention;
  double gamma = 0.99;
  int horizon = 500;
  int action_count = 2;
  // Appends one constant coordinate equal to env_id.
  bool env_identifier = false;
  // offline-clinical only: probability that each spurious feature equals the action.
  double action_agreement = 0.0;
  std::size_t spurious_count = 0;

  void validate() const;
  std::size_t base_dim() const;
  std::size_t observation_dim() const;

  friend bool operator==(const EnvironmentSpec&, const EnvironmentSpec&) = default;
};

// Observation for a CartPole-family environment.
std::vector<double> augment(std::span<const double> base, const InterventionSpec& intervention,
                            std::optional<int> env_identifier = std::nullopt);

// Inverse of augment for the base block; checks that the noise block is
// consistent with the spec and throws otherwise.
std::vector<double> recover_base(std::span<const double> observation, std::size_t base_dim,
                                 const InterventionSpec& intervention, double tolerance = 1e-12);

// Two training environments (1x and 2x factors) for the CartPole family.
std::vector<EnvironmentSpec> cartpole_training_specs(std::size_t noise_dim, bool env_identifier = false);
EnvironmentSpec cartpole_test_spec(std::size_t noise_dim, Rng& rng, bool env_identifier = false,
                                   int env_id = 99);

nlohmann::json to_json(const EnvironmentSpec& spec);
EnvironmentSpec spec_from_json(const nlohmann::json& j);

}  // namespace icil::env
