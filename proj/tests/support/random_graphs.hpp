#pragma once

// Generator of small random graphs for gradient checking. Graph k forces
// primitive k % kPrimitives into the chain, so any run of >= kPrimitives
// graphs exercises every primitive at least once.

#include <array>
#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "icil/common/rng.hpp"

namespace icil::testkit {

inline constexpr std::array<const char*, 31> kPrimitives = {
    "matmul",      "add",         "sub",        "mul",       "scale",       "add_scalar",
    "neg",         "exp",         "log",        "abs",       "square",      "elu",
    "relu",        "sum",         "mean",       "sum_rows",  "max_rows",    "logsumexp",
    "softmax",     "log_softmax", "entropy",    "cross_entropy", "mse",     "gumbel_softmax",
    "concat_cols", "concat_rows", "slice_rows", "gather_rows", "pick",      "stop_gradient",
    "affine"};

struct RandomGraph {
  std::string primitive;
  std::vector<ad::Array> inputs;  // X [n,k], W [k,k], B [1,k], Y [n,k]
  GraphFn fn;
};

inline RandomGraph make_random_graph(std::size_t index, Rng& rng) {
  using namespace ad;
  std::uniform_int_distribution<std::size_t> dim(2, 5);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = dim(rng), k = dim(rng);
  auto random_array = [&](Shape s, double sd) {
    Array a(std::move(s));
    for (double& v : a.data()) v = sd * normal(rng);
    return a;
  };

  RandomGraph g;
  g.primitive = kPrimitives[index % kPrimitives.size()];
  g.inputs = {random_array({n, k}, 1.0), random_array({k, k}, 0.7), random_array({1, k}, 0.5),
              random_array({n, k}, 1.0)};

  std::vector<int> targets(n);
  for (auto& t : targets) t = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, k - 1)(rng));
  std::vector<std::size_t> rows(n + 1);
  for (auto& r : rows) r = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  Array gumbel = random_array({n, k}, 1.0);
  Array aux = random_array({n, k}, 1.0);
  const double c = normal(rng);
  const double tau = 0.5 + std::uniform_real_distribution<double>(0.0, 1.5)(rng);

  // Post-processing: 0-2 smooth elementwise ops, then a weighted sum.
  const std::size_t post = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
  std::vector<int> post_ops(post);
  for (auto& p : post_ops) p = static_cast<int>(std::uniform_int_distribution<int>(0, 3)(rng));
  const bool pre_matmul = std::bernoulli_distribution(0.5)(rng);
  const std::uint64_t weight_seed = rng();

  const std::string prim = g.primitive;
  g.fn = [=](const std::vector<Var>& in) -> Var {
    const Var& X = in[0];
    const Var& W = in[1];
    const Var& B = in[2];
    const Var& Y = in[3];
    Var h = pre_matmul ? add(matmul(X, W), B) : X;
    if (prim == "matmul") h = matmul(h, W);
    else if (prim == "add") h = add(add(h, B), Y);
    else if (prim == "sub") h = sub(h, Y);
    else if (prim == "mul") h = mul(h, Y);
    else if (prim == "scale") h = scale(h, c);
    else if (prim == "add_scalar") h = add_scalar(h, c);
    else if (prim == "neg") h = neg(h);
    else if (prim == "exp") h = exp(scale(h, 0.5));
    else if (prim == "log") h = log(add_scalar(square(h), 0.5));
    else if (prim == "abs") h = abs(h);
    else if (prim == "square") h = square(h);
    else if (prim == "elu") h = elu(h);
    else if (prim == "relu") h = relu(h);
    else if (prim == "sum") h = mul(h, sum(h));
    else if (prim == "mean") h = mul(h, mean(Y));
    else if (prim == "sum_rows") h = sum_rows(h);
    else if (prim == "max_rows") h = max_rows(h);
    else if (prim == "logsumexp") h = logsumexp(h);
    else if (prim == "softmax") h = softmax(h);
    else if (prim == "log_softmax") h = log_softmax(h);
    else if (prim == "entropy") h = entropy(softmax(h));
    else if (prim == "cross_entropy") h = cross_entropy(h, targets);
    else if (prim == "mse") h = mse(h, Y);
    else if (prim == "gumbel_softmax") h = gumbel_softmax(h, gumbel, tau);
    else if (prim == "concat_cols") h = concat_cols(h, Y);
    else if (prim == "concat_rows") {
      std::vector<Var> parts{h, Y, h};
      h = concat_rows(parts);
    } else if (prim == "slice_rows") h = slice_rows(h, 1, n);
    else if (prim == "gather_rows") h = gather_rows(h, rows);
    else if (prim == "pick") h = pick(h, targets);
    else if (prim == "affine") h = affine(h, W, B);
    else if (prim == "stop_gradient") h = add(h, mul(stop_gradient(constant(aux)), Y));

    for (int p : post_ops) {
      switch (p) {
        case 0: h = elu(h); break;
        case 1: h = exp(scale(h, 0.3)); break;
        case 2: h = square(h); break;
        default: h = scale(h, 1.7); break;
      }
    }
    Rng wr(weight_seed);
    std::normal_distribution<double> wn(0.0, 1.0);
    Array weights = Array::zeros_like(h.value());
    for (double& v : weights.data()) v = wn(wr);
    return sum(mul(h, constant(weights)));
  };
  return g;
}

}  // namespace icil::testkit
