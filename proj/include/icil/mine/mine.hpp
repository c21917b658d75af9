#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "icil/ad/mlp.hpp"
#include "icil/common/rng.hpp"

namespace icil::mine {

// T(u, v): ELU network on the concatenation [u, v] with a scalar head.
class StatisticsNetwork {
 public:
  StatisticsNetwork() = default;
  StatisticsNetwork(std::string name, std::size_t u_dim, std::size_t v_dim, std::uint64_t seed,
                    std::size_t hidden_dim = 64, std::size_t hidden_layers = 2);

  ad::Var operator()(const ad::Var& u, const ad::Var& v, ad::Params mode = ad::Params::live) const;

  std::size_t u_dim() const noexcept { return u_dim_; }
  std::size_t v_dim() const noexcept { return v_dim_; }
  ad::ParameterStore& params() noexcept { return net_.params(); }
  const ad::ParameterStore& params() const noexcept { return net_.params(); }

 private:
  ad::Mlp net_;
  std::size_t u_dim_ = 0;
  std::size_t v_dim_ = 0;
};

// Uniform draw from S_n.
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

// Donsker-Varadhan bound in mean form:
//   mean_i T(u_i, v_i) - log mean_i exp T(u_i, v_{perm(i)}).
// The marginal pairs reuse the u batch. Differentiable in T and both inputs.
ad::Var mine_bound(const StatisticsNetwork& T, const ad::Var& u, const ad::Var& v,
                   std::span<const std::size_t> perm, ad::Params mode = ad::Params::live);

// One Adam ascent step on T's parameters with u, v held constant. Returns the
// bound evaluated before the step.
double mine_ascent_step(StatisticsNetwork& T, const ad::Array& u, const ad::Array& v, double learning_rate,
                        Rng& rng);

struct MineConfig {
  std::size_t batch = 256;
  std::size_t steps = 3000;
  double learning_rate = 0.001;
};

struct MineTrace {
  std::vector<double> bound;  // per-step training-batch bound
};

// Fits T on paired samples (rows of u and v correspond), minibatches drawn
// without replacement inside each step.
StatisticsNetwork train_mine(const ad::Array& u, const ad::Array& v, const MineConfig& config, std::uint64_t seed,
                             MineTrace* trace = nullptr);

// Bound on a (typically held-out) sample with a fresh permutation.
double estimate_mi(const StatisticsNetwork& T, const ad::Array& u, const ad::Array& v, Rng& rng);

}  // namespace icil::mine
