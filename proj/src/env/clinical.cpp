#include "icil/env/clinical.hpp"

#include <cmath>
#include <random>

#include "icil/common/error.hpp"

namespace icil::env {

const std::array<double, clinical::kBaseDim * clinical::kBaseDim>& clinical_transition() {
  // 0.8 on the diagonal, 0.1 coupling to the next coordinate: row sums of
  // |A| are 0.9, so the spectral radius is at most 0.9.
  static const auto a = [] {
    std::array<double, clinical::kBaseDim * clinical::kBaseDim> m{};
    for (std::size_t i = 0; i < clinical::kBaseDim; ++i) {
      m[i * clinical::kBaseDim + i] = 0.8;
      m[i * clinical::kBaseDim + (i + 1) % clinical::kBaseDim] = 0.1;
    }
    return m;
  }();
  return a;
}

double clinical_expert_probability(const std::vector<double>& base) {
  double z = clinical::kExpertBias;
  for (std::size_t i = 0; i < clinical::kExpertWeights.size(); ++i) z += clinical::kExpertWeights[i] * base[i];
  return 1.0 / (1.0 + std::exp(-z));
}

EnvironmentSpec clinical_spec(int env_id, double action_agreement) {
  EnvironmentSpec s;
  s.env_id = env_id;
  s.task = Task::offline_clinical;
  s.horizon = clinical::kHorizon;
  s.action_count = 2;
  s.action_agreement = action_agreement;
  s.spurious_count = clinical::kSpuriousCount;
  s.validate();
  return s;
}

Dataset offline_clinical_dataset(std::size_t trajectories_per_env, const std::vector<double>& agreement,
                                 std::uint64_t seed, int first_env_id) {
  std::vector<EnvironmentSpec> specs;
  for (std::size_t i = 0; i < agreement.size(); ++i) {
    specs.push_back(clinical_spec(first_env_id + static_cast<int>(i), agreement[i]));
  }
  return generate_clinical_dataset(specs, trajectories_per_env, seed);
}

Dataset generate_clinical_dataset(const std::vector<EnvironmentSpec>& specs,
                                  std::size_t trajectories_per_env, std::uint64_t seed) {
  if (trajectories_per_env == 0) throw ConfigError("need at least one trajectory per environment");
  const auto& A = clinical_transition();
  constexpr std::size_t d = clinical::kBaseDim;
  Dataset ds;
  ds.specs = specs;
  ds.seed = seed;
  for (const EnvironmentSpec& spec : specs) {
    spec.validate();
    if (spec.task != Task::offline_clinical) throw ConfigError("generate_clinical_dataset: wrong task");
    const double p = spec.action_agreement;
    for (std::size_t i = 0; i < trajectories_per_env; ++i) {
      Rng rng(derive_seed(seed, "clinical", {static_cast<std::uint64_t>(spec.env_id), i}));
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::uniform_real_distribution<double> unif(0.0, 1.0);

      // States and actions first; each observation carries flags that
      // depend on the action taken at that same step.
      const std::size_t T = static_cast<std::size_t>(spec.horizon);
      std::vector<std::vector<double>> states(T + 1, std::vector<double>(d));
      std::vector<int> actions(T + 1);
      for (double& v : states[0]) v = gauss(rng);
      for (std::size_t t = 0; t <= T; ++t) {
        actions[t] = unif(rng) < clinical_expert_probability(states[t]) ? 1 : 0;
        if (t == T) break;
        for (std::size_t r = 0; r < d; ++r) {
          double v = clinical::kActionEffect[r] * (actions[t] == 1 ? 1.0 : -1.0);
          for (std::size_t c = 0; c < d; ++c) v += A[r * d + c] * states[t][c];
          states[t + 1][r] = v + clinical::kStateNoise * gauss(rng);
        }
      }
      std::vector<std::vector<double>> obs(T + 1);
      for (std::size_t t = 0; t <= T; ++t) {
        obs[t] = states[t];
        for (std::size_t k = 0; k < spec.spurious_count; ++k) {
          const bool agree = unif(rng) < p;
          obs[t].push_back(agree ? actions[t] : 1 - actions[t]);
        }
        if (spec.env_identifier) obs[t].push_back(spec.env_id);
      }
      Trajectory tr;
      tr.env_id = spec.env_id;
      for (std::size_t t = 0; t < T; ++t) tr.steps.push_back({obs[t], actions[t], obs[t + 1], false});
      ds.trajectories.push_back(std::move(tr));
    }
  }
  return ds;
}

}  // namespace icil::env
