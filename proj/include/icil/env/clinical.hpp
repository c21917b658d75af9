#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "icil/env/dataset.hpp"

namespace icil::env {

namespace clinical {
inline constexpr std::size_t kBaseDim = 8;
inline constexpr std::size_t kSpuriousCount = 20;
inline constexpr int kHorizon = 24;
inline constexpr double kStateNoise = 0.5;
// Expert: P(a=1 | s) = sigmoid(w . s[0..2] + b).
inline constexpr std::array<double, 3> kExpertWeights = {2.0, -1.5, 1.0};
inline constexpr double kExpertBias = 0.0;
// How strongly a_t feeds into s_{t+1}.
inline constexpr std::array<double, kBaseDim> kActionEffect = {-0.3, 0.2, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0};
}  // namespace clinical

// Fixed stable 8x8 AR(1) matrix (spectral radius < 1), row-major.
const std::array<double, clinical::kBaseDim * clinical::kBaseDim>& clinical_transition();

double clinical_expert_probability(const std::vector<double>& base);

EnvironmentSpec clinical_spec(int env_id, double action_agreement);

// Synthetic offline analogue: Markov patient state, logistic expert on three
// coordinates, spurious binary flags equal to the action with probability p.
// One spec per entry of `agreement`; env-ids are 0..k-1.
Dataset offline_clinical_dataset(std::size_t trajectories_per_env, const std::vector<double>& agreement,
                                 std::uint64_t seed, int first_env_id = 0);

Dataset generate_clinical_dataset(const std::vector<EnvironmentSpec>& specs,
                                  std::size_t trajectories_per_env, std::uint64_t seed);

}  // namespace icil::env
