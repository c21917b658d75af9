#include "icil/env/cartpole.hpp"

#include <cmath>

namespace icil::env {

CartPoleStep cartpole_step(const CartPoleState& state, int action) {
  using namespace cartpole;
  const auto [x, x_dot, theta, theta_dot] = state;
  const double force = action == 1 ? kForce : -kForce;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double total_mass = kCartMass + kPoleMass;
  const double pole_mass_length = kPoleMass * kHalfLength;

  const double temp = (force + pole_mass_length * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc = (kGravity * sin_t - cos_t * temp) /
                           (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

  CartPoleStep out;
  out.next = {x + kDt * x_dot, x_dot + kDt * x_acc, theta + kDt * theta_dot, theta_dot + kDt * theta_acc};
  out.terminated = out.next[0] < -kPositionLimit || out.next[0] > kPositionLimit ||
                   out.next[2] < -kAngleLimit || out.next[2] > kAngleLimit;
  return out;
}

CartPoleState cartpole_reset(Rng& rng) {
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  CartPoleState s{};
  for (double& v : s) v = u(rng);
  return s;
}

int scripted_expert(const CartPoleState& s) {
  const double u = 0.1 * s[0] + 0.5 * s[1] + 10.0 * s[2] + 2.0 * s[3];
  return u >= 0.0 ? 1 : 0;
}

}  // namespace icil::env
