#pragma once

#include <cstdint>
#include <string>

#include "icil/ad/params.hpp"

namespace icil::ad {

enum class Activation { elu, relu };

struct MlpSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::size_t hidden_dim = 64;
  std::size_t hidden_layers = 2;
  Activation activation = Activation::elu;
};

// Whether a forward pass lets gradients reach this network's parameters.
enum class Params { live, frozen };

// Fully connected network: `hidden_layers` activated layers, linear output.
// Weights are drawn U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from a stream derived
// from (seed, name); biases start at zero.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, const MlpSpec& spec, std::uint64_t seed);

  Var forward(const Var& x, Params mode = Params::live) const;
  Array predict(const Array& x) const;
  // d(sum of all outputs)/dx without building a graph. Same values as
  // backward(sum(forward(x))) on a parameter leaf x; used in tight sampling loops.
  Array input_gradient(const Array& x) const;

  const std::string& name() const noexcept { return name_; }
  const MlpSpec& spec() const noexcept { return spec_; }
  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }

 private:
  std::string name_;
  MlpSpec spec_;
  ParameterStore params_;
};

}  // namespace icil::ad
