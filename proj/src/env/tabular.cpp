#include "icil/env/tabular.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "icil/common/error.hpp"

namespace icil::env {

namespace {

void check_distribution(const double* p, std::size_t n, const std::string& what) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p[i] >= 0.0 && p[i] <= 1.0 + 1e-12)) throw NumericError(what + ": entry outside [0,1]");
    total += p[i];
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw NumericError(what + ": row sums to " + std::to_string(total) + ", not 1");
  }
}

std::size_t draw(const double* p, std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += p[i];
    if (r < acc) return i;
  }
  // rounding leaves a sliver above the last cumulative value
  for (std::size_t i = n; i-- > 0;) {
    if (p[i] > 0.0) return i;
  }
  return n - 1;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

}  // namespace

void TabularMdp::validate() const {
  if (states == 0 || states > kMaxTabularStates) {
    throw ConfigError("tabular MDP: state count must be in [1, 64], got " + std::to_string(states));
  }
  if (actions == 0 || actions > kMaxTabularActions) {
    throw ConfigError("tabular MDP: action count must be in [1, 4], got " + std::to_string(actions));
  }
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("tabular MDP: gamma must lie in (0,1)");
  if (transition.size() != states * actions * states || initial.size() != states) {
    throw ShapeError("tabular MDP: table sizes do not match state/action counts");
  }
  for (std::size_t sa = 0; sa < states * actions; ++sa) {
    check_distribution(transition.data() + sa * states, states,
                       "transition row (s=" + std::to_string(sa / actions) +
                           ", a=" + std::to_string(sa % actions) + ")");
  }
  check_distribution(initial.data(), states, "initial distribution");
}

void validate_policy(const TabularMdp& mdp, const TabularPolicy& policy) {
  if (policy.size() != mdp.states * mdp.actions) throw ShapeError("tabular policy: wrong size");
  for (std::size_t s = 0; s < mdp.states; ++s) {
    check_distribution(policy.data() + s * mdp.actions, mdp.actions, "policy row " + std::to_string(s));
  }
}

std::vector<double> occupancy_measure(const TabularMdp& mdp, const TabularPolicy& policy) {
  mdp.validate();
  validate_policy(mdp, policy);
  const std::size_t S = mdp.states, A = mdp.actions;
  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(S, S);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t n = 0; n < S; ++n) p_pi(s, n) += policy[s * A + a] * mdp.p(s, a, n);
    }
  }
  Eigen::VectorXd mu(S);
  for (std::size_t s = 0; s < S; ++s) mu(s) = mdp.initial[s];
  const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(S, S) - mdp.gamma * p_pi.transpose();
  const Eigen::VectorXd d = lhs.partialPivLu().solve((1.0 - mdp.gamma) * mu);
  std::vector<double> rho(S * A);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) rho[s * A + a] = d(s) * policy[s * A + a];
  }
  return rho;
}

OccupancyEstimate occupancy_monte_carlo(const TabularMdp& mdp, const TabularPolicy& policy,
                                        std::size_t samples, Rng& rng) {
  mdp.validate();
  validate_policy(mdp, policy);
  if (samples < 2) throw ConfigError("occupancy_monte_carlo: need at least two samples");
  const std::size_t S = mdp.states, A = mdp.actions;
  std::geometric_distribution<std::size_t> horizon(1.0 - mdp.gamma);
  std::vector<double> counts(S * A, 0.0);
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t T = horizon(rng);
    std::size_t s = draw(mdp.initial.data(), S, rng);
    std::size_t a = draw(policy.data() + s * A, A, rng);
    for (std::size_t t = 0; t < T; ++t) {
      s = draw(mdp.transition.data() + (s * A + a) * S, S, rng);
      a = draw(policy.data() + s * A, A, rng);
    }
    counts[s * A + a] += 1.0;
  }
  OccupancyEstimate est;
  const double n = static_cast<double>(samples);
  for (double c : counts) {
    const double p = c / n;
    est.mean.push_back(p);
    est.standard_error.push_back(std::sqrt(p * (1.0 - p) / n));
  }
  return est;
}

std::vector<std::size_t> decode_state(std::size_t s, const std::vector<std::size_t>& sizes) {
  std::vector<std::size_t> parts(sizes.size());
  for (std::size_t i = sizes.size(); i-- > 0;) {
    parts[i] = s % sizes[i];
    s /= sizes[i];
  }
  return parts;
}

std::size_t encode_state(const std::vector<std::size_t>& parts, const std::vector<std::size_t>& sizes) {
  std::size_t s = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) s = s * sizes[i] + parts[i];
  return s;
}

TabularMdp factored_mdp(const std::vector<std::size_t>& sizes, std::size_t actions,
                        const std::vector<std::vector<double>>& kernels, std::vector<double> initial,
                        double gamma) {
  if (sizes.empty() || kernels.size() != sizes.size()) {
    throw ConfigError("factored_mdp: one kernel per component is required");
  }
  const std::size_t S = std::accumulate(sizes.begin(), sizes.end(), std::size_t{1}, std::multiplies<>());
  TabularMdp mdp;
  mdp.states = S;
  mdp.actions = actions;
  mdp.gamma = gamma;
  mdp.initial = std::move(initial);
  mdp.transition.assign(S * actions * S, 0.0);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (kernels[i].size() != S * actions * sizes[i]) throw ShapeError("factored_mdp: kernel size mismatch");
  }
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < actions; ++a) {
      for (std::size_t n = 0; n < S; ++n) {
        const auto parts = decode_state(n, sizes);
        double p = 1.0;
        for (std::size_t i = 0; i < sizes.size(); ++i) p *= kernels[i][(s * actions + a) * sizes[i] + parts[i]];
        mdp.transition[(s * actions + a) * S + n] = p;
      }
    }
  }
  mdp.validate();
  return mdp;
}

TabularMdp random_factored_mdp(const std::vector<std::size_t>& sizes, std::size_t actions, double gamma,
                               Rng& rng) {
  const std::size_t S = std::accumulate(sizes.begin(), sizes.end(), std::size_t{1}, std::multiplies<>());
  std::exponential_distribution<double> gamma1(1.0);  // Dirichlet(1) via normalized Exp(1)
  std::vector<std::vector<double>> kernels(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    kernels[i].resize(S * actions * sizes[i]);
    for (std::size_t sa = 0; sa < S * actions; ++sa) {
      double total = 0.0;
      for (std::size_t v = 0; v < sizes[i]; ++v) total += kernels[i][sa * sizes[i] + v] = gamma1(rng);
      for (std::size_t v = 0; v < sizes[i]; ++v) kernels[i][sa * sizes[i] + v] /= total;
    }
  }
  return factored_mdp(sizes, actions, kernels, std::vector<double>(S, 1.0 / static_cast<double>(S)), gamma);
}

double max_conditional_total_correlation(const TabularMdp& mdp, const std::vector<std::size_t>& sizes) {
  mdp.validate();
  const std::size_t S = mdp.states, A = mdp.actions;
  if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{1}, std::multiplies<>()) != S) {
    throw ShapeError("component sizes do not multiply to the state count");
  }
  double worst = 0.0;
  for (std::size_t sa = 0; sa < S * A; ++sa) {
    std::vector<double> joint(mdp.transition.begin() + static_cast<std::ptrdiff_t>(sa * S),
                              mdp.transition.begin() + static_cast<std::ptrdiff_t>((sa + 1) * S));
    double tc = -entropy(joint);
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      std::vector<double> marginal(sizes[i], 0.0);
      for (std::size_t n = 0; n < S; ++n) marginal[decode_state(n, sizes)[i]] += joint[n];
      tc += entropy(marginal);
    }
    worst = std::max(worst, std::fabs(tc));
  }
  return worst;
}

}  // namespace icil::env
