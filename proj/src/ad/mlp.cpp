#include "icil/ad/mlp.hpp"

#include <cmath>
#include <random>

#include "icil/common/error.hpp"
#include "icil/common/rng.hpp"

namespace icil::ad {

Mlp::Mlp(std::string name, const MlpSpec& spec, std::uint64_t seed)
    : name_(std::move(name)), spec_(spec) {
  if (spec.input_dim == 0 || spec.output_dim == 0 || spec.hidden_dim == 0) {
    throw ConfigError("Mlp '" + name_ + "': dimensions must be positive");
  }
  Rng rng(derive_seed(seed, name_));
  std::size_t fan_in = spec.input_dim;
  for (std::size_t layer = 0; layer <= spec.hidden_layers; ++layer) {
    const std::size_t fan_out = layer == spec.hidden_layers ? spec.output_dim : spec.hidden_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Array w({fan_in, fan_out});
    for (double& x : w.data()) x = dist(rng);
    const std::string prefix = name_ + "/l" + std::to_string(layer);
    params_.add(prefix + "/w", std::move(w));
    params_.add(prefix + "/b", Array({1, fan_out}));
    fan_in = fan_out;
  }
}

Var Mlp::forward(const Var& x, Params mode) const {
  if (x.value().rank() != 2 || x.value().cols() != spec_.input_dim) {
    throw ShapeError("Mlp '" + name_ + "': expected input [n," + std::to_string(spec_.input_dim) +
                     "], got " + x.value().shape_string());
  }
  const auto& entries = params_.entries();
  Var h = x;
  for (std::size_t layer = 0; layer <= spec_.hidden_layers; ++layer) {
    Var w = entries[2 * layer].var;
    Var b = entries[2 * layer + 1].var;
    if (mode == Params::frozen) {
      w = stop_gradient(w);
      b = stop_gradient(b);
    }
    h = affine(h, w, b);
    if (layer < spec_.hidden_layers) {
      h = spec_.activation == Activation::elu ? elu(h) : relu(h);
    }
  }
  return h;
}

Array Mlp::predict(const Array& x) const { return forward(constant(x), Params::frozen).value(); }

Array Mlp::input_gradient(const Array& x) const {
  if (x.rank() != 2 || x.cols() != spec_.input_dim) {
    throw ShapeError("Mlp '" + name_ + "': expected input [n," + std::to_string(spec_.input_dim) + "], got " +
                     x.shape_string());
  }
  const auto& entries = params_.entries();
  const std::size_t L = spec_.hidden_layers;
  std::vector<RowMatrix> pre(L);
  RowMatrix h = x.matrix();
  for (std::size_t layer = 0; layer < L; ++layer) {
    pre[layer] = h * entries[2 * layer].var.value().matrix();
    pre[layer].rowwise() += entries[2 * layer + 1].var.value().matrix().row(0);
    h = pre[layer].unaryExpr([&](double v) {
      if (v > 0.0) return v;
      return spec_.activation == Activation::elu ? std::expm1(v) : 0.0;
    });
  }
  RowMatrix g = RowMatrix::Ones(x.rows(), spec_.output_dim);
  for (std::size_t layer = L + 1; layer-- > 0;) {
    if (layer < L) {
      g = g.cwiseProduct(pre[layer].unaryExpr([&](double v) {
        if (v > 0.0) return 1.0;
        return spec_.activation == Activation::elu ? std::expm1(v) + 1.0 : 0.0;
      }));
    }
    g = g * entries[2 * layer].var.value().matrix().transpose();
  }
  Array out({x.rows(), x.cols()});
  out.matrix() = g;
  return out;
}

}  // namespace icil::ad
