#pragma once

// Central finite-difference oracle for the autodiff engine. Test-only: it
// evaluates the graph builder on constants and never calls backward().

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "icil/ad/graph.hpp"

namespace icil::testkit {

using GraphFn = std::function<ad::Var(const std::vector<ad::Var>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "input[i][j]: analytic vs numeric"
};

inline double evaluate_scalar(const GraphFn& f, const std::vector<ad::Array>& inputs) {
  std::vector<ad::Var> leaves;
  for (const auto& a : inputs) leaves.push_back(ad::constant(a));
  return f(leaves).value().item();
}

inline std::vector<ad::Array> numeric_gradients(const GraphFn& f, std::vector<ad::Array> inputs,
                                                double h = 1e-5) {
  std::vector<ad::Array> grads;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ad::Array g = ad::Array::zeros_like(inputs[i]);
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x0 = inputs[i][j];
      inputs[i][j] = x0 + h;
      const double fp = evaluate_scalar(f, inputs);
      inputs[i][j] = x0 - h;
      const double fm = evaluate_scalar(f, inputs);
      inputs[i][j] = x0;
      g[j] = (fp - fm) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

inline std::vector<ad::Array> analytic_gradients(const GraphFn& f, const std::vector<ad::Array>& inputs) {
  std::vector<ad::Var> leaves;
  for (const auto& a : inputs) leaves.push_back(ad::parameter(a));
  ad::backward(f(leaves));
  std::vector<ad::Array> grads;
  for (const auto& v : leaves) grads.push_back(v.grad().empty() ? ad::Array::zeros_like(v.value()) : v.grad());
  return grads;
}

// Relative error |a - f| / max(1, |f|), worst element over all inputs.
inline GradCheckResult check_gradients(const GraphFn& f, const std::vector<ad::Array>& inputs,
                                       double h = 1e-5) {
  const auto analytic = analytic_gradients(f, inputs);
  const auto numeric = numeric_gradients(f, inputs, h);
  GradCheckResult r;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double a = analytic[i][j];
      const double n = numeric[i][j];
      const double err = std::fabs(a - n) / std::max(1.0, std::fabs(n));
      if (err > r.max_rel_error) {
        r.max_rel_error = err;
        r.worst = "input[" + std::to_string(i) + "][" + std::to_string(j) + "]: analytic " +
                  std::to_string(a) + " vs numeric " + std::to_string(n);
      }
    }
  }
  return r;
}

}  // namespace icil::testkit
