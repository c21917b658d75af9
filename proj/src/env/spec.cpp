#include "icil/env/spec.hpp"

#include <cmath>
#include <random>

#include "icil/common/error.hpp"
#include "icil/env/cartpole.hpp"

namespace icil::env {

std::string to_string(Task task) {
  switch (task) {
    case Task::cartpole: return "cartpole";
    case Task::tabular: return "tabular";
    case Task::offline_clinical: return "offline-clinical";
  }
  return "unknown";
}

Task task_from_string(const std::string& name) {
  if (name == "cartpole") return Task::cartpole;
  if (name == "tabular") return Task::tabular;
  if (name == "offline-clinical") return Task::offline_clinical;
  throw ConfigError("unknown task '" + name + "'");
}

InterventionSpec::InterventionSpec(std::vector<double> factors, std::vector<std::size_t> source_indices)
    : factors_(std::move(factors)), source_indices_(std::move(source_indices)) {
  if (factors_.size() != source_indices_.size()) {
    throw ConfigError("InterventionSpec: " + std::to_string(factors_.size()) + " factors but " +
                      std::to_string(source_indices_.size()) + " source indices");
  }
  for (double f : factors_) {
    if (f == 0.0 || !std::isfinite(f)) {
      throw ConfigError("InterventionSpec: multiplicative factors must be finite and non-zero");
    }
  }
}

InterventionSpec InterventionSpec::cartpole_uniform(std::size_t noise_dim, double factor) {
  std::vector<std::size_t> idx(noise_dim);
  for (std::size_t i = 0; i < noise_dim; ++i) idx[i] = 1 + i % 3;
  return InterventionSpec(std::vector<double>(noise_dim, factor), std::move(idx));
}

InterventionSpec InterventionSpec::cartpole_sampled(std::size_t noise_dim, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> factors(noise_dim);
  std::vector<std::size_t> idx(noise_dim);
  for (std::size_t i = 0; i < noise_dim; ++i) {
    double f = u(rng);
    while (std::fabs(f) < 0.05) f = u(rng);
    factors[i] = f;
    idx[i] = 1 + i % 3;
  }
  return InterventionSpec(std::move(factors), std::move(idx));
}

void InterventionSpec::validate_for(std::size_t base_dim) const {
  for (std::size_t i : source_indices_) {
    if (i >= base_dim) {
      throw ConfigError("InterventionSpec: source index " + std::to_string(i) +
                        " out of range for base dimension " + std::to_string(base_dim));
    }
  }
}

void EnvironmentSpec::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("EnvironmentSpec: gamma must lie in (0,1)");
  if (horizon <= 0) throw ConfigError("EnvironmentSpec: horizon must be positive");
  if (action_count <= 0) throw ConfigError("EnvironmentSpec: action count must be positive");
  if (task == Task::cartpole) intervention.validate_for(cartpole::kStateDim);
  if (task == Task::offline_clinical && !(action_agreement >= 0.0 && action_agreement <= 1.0)) {
    throw ConfigError("EnvironmentSpec: action agreement must lie in [0,1]");
  }
}

std::size_t EnvironmentSpec::base_dim() const {
  switch (task) {
    case Task::cartpole: return cartpole::kStateDim;
    case Task::offline_clinical: return 8;
    case Task::tabular: return 1;
  }
  return 0;
}

std::size_t EnvironmentSpec::observation_dim() const {
  const std::size_t extra = task == Task::offline_clinical ? spurious_count : intervention.noise_dim();
  return base_dim() + extra + (env_identifier ? 1 : 0);
}

std::vector<double> augment(std::span<const double> base, const InterventionSpec& intervention,
                            std::optional<int> env_identifier) {
  intervention.validate_for(base.size());
  std::vector<double> obs(base.begin(), base.end());
  obs.reserve(base.size() + intervention.noise_dim() + 1);
  for (std::size_t i = 0; i < intervention.noise_dim(); ++i) {
    obs.push_back(intervention.factors()[i] * base[intervention.source_indices()[i]]);
  }
  if (env_identifier) obs.push_back(static_cast<double>(*env_identifier));
  return obs;
}

std::vector<double> recover_base(std::span<const double> observation, std::size_t base_dim,
                                 const InterventionSpec& intervention, double tolerance) {
  if (observation.size() < base_dim + intervention.noise_dim()) {
    throw ConfigError("recover_base: observation too short for the intervention");
  }
  std::vector<double> base(observation.begin(), observation.begin() + static_cast<std::ptrdiff_t>(base_dim));
  for (std::size_t i = 0; i < intervention.noise_dim(); ++i) {
    const double implied = observation[base_dim + i] / intervention.factors()[i];
    if (std::fabs(implied - base[intervention.source_indices()[i]]) >
        tolerance * std::max(1.0, std::fabs(implied))) {
      throw ConfigError("recover_base: noise coordinate " + std::to_string(i) +
                        " is inconsistent with the intervention");
    }
  }
  return base;
}

std::vector<EnvironmentSpec> cartpole_training_specs(std::size_t noise_dim, bool env_identifier) {
  std::vector<EnvironmentSpec> specs;
  for (int e = 0; e < 2; ++e) {
    EnvironmentSpec s;
    s.env_id = e;
    s.task = Task::cartpole;
    s.intervention = InterventionSpec::cartpole_uniform(noise_dim, e == 0 ? 1.0 : 2.0);
    s.horizon = cartpole::kMaxSteps;
    s.action_count = cartpole::kActions;
    s.env_identifier = env_identifier;
    specs.push_back(s);
  }
  return specs;
}

EnvironmentSpec cartpole_test_spec(std::size_t noise_dim, Rng& rng, bool env_identifier, int env_id) {
  EnvironmentSpec s;
  s.env_id = env_id;
  s.task = Task::cartpole;
  s.intervention = InterventionSpec::cartpole_sampled(noise_dim, rng);
  s.horizon = cartpole::kMaxSteps;
  s.action_count = cartpole::kActions;
  s.env_identifier = env_identifier;
  return s;
}

nlohmann::json to_json(const EnvironmentSpec& spec) {
  return {{"env_id", spec.env_id},
          {"task", to_string(spec.task)},
          {"factors", spec.intervention.factors()},
          {"source_indices", spec.intervention.source_indices()},
          {"gamma", spec.gamma},
          {"horizon", spec.horizon},
          {"action_count", spec.action_count},
          {"env_identifier", spec.env_identifier},
          {"action_agreement", spec.action_agreement},
          {"spurious_count", spec.spurious_count}};
}

EnvironmentSpec spec_from_json(const nlohmann::json& j) {
  EnvironmentSpec s;
  s.env_id = j.at("env_id").get<int>();
  s.task = task_from_string(j.at("task").get<std::string>());
  s.intervention = InterventionSpec(j.at("factors").get<std::vector<double>>(),
                                    j.at("source_indices").get<std::vector<std::size_t>>());
  s.gamma = j.at("gamma").get<double>();
  s.horizon = j.at("horizon").get<int>();
  s.action_count = j.at("action_count").get<int>();
  s.env_identifier = j.at("env_identifier").get<bool>();
  s.action_agreement = j.value("action_agreement", 0.0);
  s.spurious_count = j.value("spurious_count", std::size_t{0});
  s.validate();
  return s;
}

}  // namespace icil::env
