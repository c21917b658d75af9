#pragma once

#include <array>

#include "icil/common/rng.hpp"

namespace icil::env {

// [cart-pos, cart-vel, pole-angle, pole-angvel]
using CartPoleState = std::array<double, 4>;

namespace cartpole {
inline constexpr double kGravity = 9.8;
inline constexpr double kCartMass = 1.0;
inline constexpr double kPoleMass = 0.1;
inline constexpr double kHalfLength = 0.5;
inline constexpr double kForce = 10.0;
inline constexpr double kDt = 0.02;
inline constexpr double kAngleLimit = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
inline constexpr double kPositionLimit = 2.4;
inline constexpr int kMaxSteps = 500;
inline constexpr int kActions = 2;
inline constexpr std::size_t kStateDim = 4;
}  // namespace cartpole

struct CartPoleStep {
  CartPoleState next;
  bool terminated;  // pole fell or cart left the track
};

// Euler-integrated cart-pole with the classic control constants. Action 1
// pushes right, 0 pushes left. The 500-step limit is applied by the caller.
CartPoleStep cartpole_step(const CartPoleState& state, int action);

// Initial state: each coordinate U(-0.05, 0.05).
CartPoleState cartpole_reset(Rng& rng);

// Linear state-feedback controller used as the demonstrator. Pushes right
// when 0.1*x + 0.5*v + 10*theta + 2*omega >= 0 (ties push right).
int scripted_expert(const CartPoleState& state);

}  // namespace icil::env

