#pragma once

#include <cstddef>
#include <vector>

#include "icil/common/rng.hpp"

namespace icil::env {

inline constexpr std::size_t kMaxTabularStates = 64;
inline constexpr std::size_t kMaxTabularActions = 4;

// Finite MDP. transition[(s*A + a)*S + s'] = P(s' | s, a).
struct TabularMdp {
  std::size_t states = 0;
  std::size_t actions = 0;
  std::vector<double> transition;
  std::vector<double> initial;  // mu_0 over states
  double gamma = 0.99;

  double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transition[(s * actions + a) * states + next];
  }
  // Sizes, probability ranges and row sums (tolerance 1e-9).
  void validate() const;
};

// policy[s*A + a] = pi(a | s)
using TabularPolicy = std::vector<double>;

void validate_policy(const TabularMdp& mdp, const TabularPolicy& policy);

// Exact discounted occupancy rho[s*A + a] = (1-gamma) sum_t gamma^t P(s_t=s, a_t=a),
// from the flow equations (I - gamma P_pi^T) d = (1-gamma) mu_0.
std::vector<double> occupancy_measure(const TabularMdp& mdp, const TabularPolicy& policy);

struct OccupancyEstimate {
  std::vector<double> mean;
  std::vector<double> standard_error;
};

// Samples a geometric stopping time T with P(T=t) = (1-gamma) gamma^t, rolls
// the chain for T steps and records (s_T, a_T). Unbiased for rho.
OccupancyEstimate occupancy_monte_carlo(const TabularMdp& mdp, const TabularPolicy& policy,
                                        std::size_t samples, Rng& rng);

// State s is the mixed-radix tuple (x^1, ..., x^k) with component sizes
// `sizes` (first component most significant).
std::vector<std::size_t> decode_state(std::size_t s, const std::vector<std::size_t>& sizes);
std::size_t encode_state(const std::vector<std::size_t>& parts, const std::vector<std::size_t>& sizes);

// Each next-state component is drawn from its own kernel given the full
// current state and action: kernels[i][(s*A + a)*sizes[i] + v].
TabularMdp factored_mdp(const std::vector<std::size_t>& sizes, std::size_t actions,
                        const std::vector<std::vector<double>>& kernels, std::vector<double> initial,
                        double gamma);

// Random factored MDP with Dirichlet(1) kernels and a uniform start.
TabularMdp random_factored_mdp(const std::vector<std::size_t>& sizes, std::size_t actions, double gamma,
                               Rng& rng);

// max over (s,a) of the total correlation sum_i H(x'^i) - H(x') of the next
// state components, in nats. Zero iff components are independent given (s,a).
double max_conditional_total_correlation(const TabularMdp& mdp, const std::vector<std::size_t>& sizes);

}  // namespace icil::env
