#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "icil/ad/array.hpp"
#include "icil/env/cartpole.hpp"
#include "icil/env/spec.hpp"

namespace icil::env {

struct Step {
  std::vector<double> observation;
  int action = 0;
  std::vector<double> next_observation;
  bool terminal = false;  // next_observation is absorbing (pole fell); truncation is not terminal

  friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
  int env_id = 0;
  std::vector<Step> steps;

  // x_{t+1} of step t equals x_t of step t+1, bitwise.
  bool chains() const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct Dataset {
  std::vector<EnvironmentSpec> specs;  // one per env-id appearing in trajectories
  std::vector<Trajectory> trajectories;
  std::uint64_t seed = 0;

  std::size_t observation_dim() const;
  std::size_t transition_count() const;
  std::vector<int> env_ids() const;  // sorted, distinct
  std::size_t trajectories_for(int env_id) const;
  const EnvironmentSpec& spec_for(int env_id) const;

  // Structural checks: chaining, action range, observation width, known env-ids.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Flat row view for minibatch training. Rows keep trajectory order.
struct TransitionTable {
  std::size_t dim = 0;
  std::vector<double> observations;       // [n, dim]
  std::vector<int> actions;               // [n]
  std::vector<double> next_observations;  // [n, dim]
  std::vector<int> env_ids;               // [n]
  std::vector<std::uint8_t> terminal;     // [n]

  std::size_t size() const noexcept { return actions.size(); }
  std::span<const double> observation(std::size_t row) const;
  std::span<const double> next_observation(std::size_t row) const;

  ad::Array gather_observations(std::span<const std::size_t> rows) const;
  ad::Array gather_next_observations(std::span<const std::size_t> rows) const;
  std::vector<int> gather_actions(std::span<const std::size_t> rows) const;

  // Row indices grouped by env-id (ascending env-id order).
  std::vector<std::vector<std::size_t>> rows_by_env(const std::vector<int>& env_order) const;
};

TransitionTable flatten(const Dataset& dataset);

using ExpertFn = std::function<int(const CartPoleState&)>;

// CartPole-family expert demonstrations. The expert sees the base state only.
// Each (env, trajectory) pair draws from its own derived PRNG stream.
Dataset generate_cartpole_dataset(const std::vector<EnvironmentSpec>& specs, const ExpertFn& expert,
                                  std::size_t trajectories_per_env, std::uint64_t seed);

// Dispatches on the task of the specs (all must share one task).
Dataset generate_dataset(const std::vector<EnvironmentSpec>& specs, std::size_t trajectories_per_env,
                         std::uint64_t seed);

// ---- file formats ----
inline constexpr std::uint32_t kDatasetFormatVersion = 1;
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
// env_id,traj_id,t,x_0..x_{d-1},a,x'_0..x'_{d-1}
void export_dataset_csv(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace icil::env
