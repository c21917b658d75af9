#pragma once

#include <cmath>
#include <random>
#include <utility>

#include "icil/ad/array.hpp"
#include "icil/common/rng.hpp"

namespace icil::testkit {

// Two isotropic blobs at (-2, 0) and (2, 1), std 0.5, equal weight.
inline ad::Array gaussian_mixture_2d(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 0.5);
  std::bernoulli_distribution side(0.5);
  std::vector<double> out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool right = side(rng);
    out[2 * i] = (right ? 2.0 : -2.0) + g(rng);
    out[2 * i + 1] = (right ? 1.0 : 0.0) + g(rng);
  }
  return ad::Array::matrix(n, 2, std::move(out));
}

inline ad::Array uniform_box(std::size_t n, std::size_t d, double half_width, Rng& rng) {
  std::uniform_real_distribution<double> u(-half_width, half_width);
  std::vector<double> out(n * d);
  for (double& v : out) v = u(rng);
  return ad::Array::matrix(n, d, std::move(out));
}

// Standard bivariate normal pairs with correlation rho, returned as ([n,1], [n,1]).
inline std::pair<ad::Array, ad::Array> correlated_gaussian(std::size_t n, double rho, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> u(n), v(n);
  const double c = std::sqrt(1.0 - rho * rho);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = g(rng);
    v[i] = rho * u[i] + c * g(rng);
  }
  return {ad::Array::matrix(n, 1, std::move(u)), ad::Array::matrix(n, 1, std::move(v))};
}

inline double gaussian_mi(double rho) { return -0.5 * std::log(1.0 - rho * rho); }

}  // namespace icil::testkit
