#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "icil/ad/mlp.hpp"
#include "icil/common/rng.hpp"
#include "icil/env/standardizer.hpp"

namespace icil::ebm {

struct EbmConfig {
  int langevin_steps = 100;    // K
  double step_size = 0.01;     // alpha
  double noise_std = 0.01;     // sigma, used as the standard deviation of omega
  std::size_t batch = 64;      // N
  std::size_t buffer_capacity = 10000;
  double restart_prob = 0.05;  // fresh U(-1,1) start instead of a buffer draw
  double learning_rate = 0.001;
  std::size_t iterations = 1000;
  double divergence_bound = 1e6;
  std::size_t hidden_dim = 64;
  std::size_t hidden_layers = 2;

  void validate() const;
  nlohmann::json to_json() const;
  static EbmConfig from_json(const nlohmann::json& j);
};

// FIFO store of past negative samples.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t dim);

  void push(const ad::Array& rows);
  std::vector<double> sample(Rng& rng) const;
  std::size_t size() const noexcept { return rows_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return rows_.empty(); }

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::deque<std::vector<double>> rows_;
};

// Gradient of the summed energy with respect to each input row, [n,d] -> [n,d].
using InputGradient = std::function<ad::Array(const ad::Array&)>;

struct LangevinParams {
  int steps = 100;
  double step_size = 0.01;
  double noise_std = 0.01;
  double divergence_bound = 1e6;
};

// x^k = x^{k-1} - alpha * grad E(x^{k-1}) + omega, omega ~ N(0, sigma^2).
// Without `diverged`, a non-finite or out-of-bound value throws NumericError.
// With it, offending rows stop updating, are flagged, and the chain goes on.
ad::Array langevin_chain(const InputGradient& grad, ad::Array x0, const LangevinParams& params, Rng& rng,
                         std::vector<std::uint8_t>* diverged = nullptr);

// E(x): ReLU network with a scalar head, operating on standardized inputs.
class EnergyModel {
 public:
  EnergyModel() = default;
  EnergyModel(std::size_t input_dim, env::Standardizer standardizer, std::uint64_t seed,
              const EbmConfig& config = {});

  std::size_t input_dim() const noexcept { return net_.spec().input_dim; }
  const env::Standardizer& standardizer() const noexcept { return standardizer_; }
  const EbmConfig& config() const noexcept { return config_; }

  // Per-row energies [n,1] of already-standardized inputs. `caller` is the
  // normalization the caller used; it must equal the model's own.
  ad::Var energy(const ad::Var& z, const env::Standardizer& caller,
                 ad::Params mode = ad::Params::frozen) const;
  ad::Var energy(const ad::Var& z, ad::Params mode) const;
  // Energies of raw observations (standardized internally).
  ad::Array energies(const ad::Array& raw) const;
  ad::Array input_gradient(const ad::Array& z) const;

  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }

  ad::ParameterStore& params() noexcept { return net_.params(); }
  const ad::ParameterStore& params() const noexcept { return net_.params(); }

  void save(const std::filesystem::path& path) const;
  static EnergyModel load(const std::filesystem::path& path);

 private:
  ad::Mlp net_;
  env::Standardizer standardizer_;
  EbmConfig config_;
  bool frozen_ = false;
};

struct ContrastiveLoss {
  ad::Var cd;     // mean E(x+) - mean E(x-)
  ad::Var rg;     // mean E(x+)^2 + mean E(x-)^2
  ad::Var total;  // cd + rg
};
ContrastiveLoss contrastive_loss(const ad::Var& e_pos, const ad::Var& e_neg);

struct EbmTrainingLog {
  std::vector<double> loss;        // L_CD + L_RG
  std::vector<double> energy_gap;  // mean E(x+) - mean E(x-)
  std::size_t divergent_chains = 0;
  std::size_t buffer_size = 0;
};

struct EbmResult {
  EnergyModel model;  // frozen
  EbmTrainingLog log;
};

// Persistent contrastive divergence on the rows of `observations` (raw
// scale, [n,d]). Positives are drawn with replacement.
EbmResult train_ebm(const ad::Array& observations, const env::Standardizer& standardizer,
                    const EbmConfig& config, std::uint64_t seed);

// Convenience: all observations of a dataset, standardized by its own fit.
EbmResult train_ebm(const env::TransitionTable& table, const EbmConfig& config, std::uint64_t seed);

}  // namespace icil::ebm
