#include "icil/mine/mine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "icil/common/error.hpp"

namespace icil::mine {

using ad::Array;
using ad::Var;

StatisticsNetwork::StatisticsNetwork(std::string name, std::size_t u_dim, std::size_t v_dim,
                                     std::uint64_t seed, std::size_t hidden_dim, std::size_t hidden_layers)
    : net_(std::move(name), {u_dim + v_dim, 1, hidden_dim, hidden_layers, ad::Activation::elu}, seed),
      u_dim_(u_dim),
      v_dim_(v_dim) {}

Var StatisticsNetwork::operator()(const Var& u, const Var& v, ad::Params mode) const {
  if (u.value().cols() != u_dim_ || v.value().cols() != v_dim_) {
    throw ShapeError("statistics network: expected [n," + std::to_string(u_dim_) + "] and [n," +
                     std::to_string(v_dim_) + "], got " + u.value().shape_string() + " and " +
                     v.value().shape_string());
  }
  return net_.forward(ad::concat_cols(u, v), mode);
}

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  // Fisher-Yates with an explicit draw so the sequence does not depend on the
  // standard library's shuffle.
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p[i - 1], p[pick(rng)]);
  }
  return p;
}

Var mine_bound(const StatisticsNetwork& T, const Var& u, const Var& v, std::span<const std::size_t> perm,
               ad::Params mode) {
  const std::size_t n = u.value().rows();
  if (n < 2) throw ShapeError("mine_bound: batch size must be at least 2");
  if (v.value().rows() != n || perm.size() != n) {
    throw ShapeError("mine_bound: u, v and the permutation must share the batch size");
  }
  const Var joint = T(u, v, mode);
  const Var marginal = T(u, ad::gather_rows(v, perm), mode);
  // log mean exp = logsumexp - log n
  return ad::sub(ad::mean(joint), ad::add_scalar(ad::logsumexp(marginal), -std::log(static_cast<double>(n))));
}

double mine_ascent_step(StatisticsNetwork& T, const Array& u, const Array& v, double learning_rate, Rng& rng) {
  const auto perm = random_permutation(u.rows(), rng);
  const Var bound = mine_bound(T, ad::constant(u), ad::constant(v), perm);
  ad::backward(bound);
  T.params().adam_step(learning_rate, ad::UpdateDirection::ascent);
  return bound.value().item();
}

StatisticsNetwork train_mine(const Array& u, const Array& v, const MineConfig& config, std::uint64_t seed,
                             MineTrace* trace) {
  if (u.rows() != v.rows()) throw ShapeError("train_mine: u and v must have the same number of rows");
  const std::size_t n = u.rows();
  const std::size_t batch = std::min(config.batch, n);
  StatisticsNetwork T("mine", u.cols(), v.cols(), derive_seed(seed, "mine-init"));
  Rng rng(derive_seed(seed, "mine-train"));
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto order = random_permutation(n, rng);
    const std::span<const std::size_t> rows(order.data(), batch);
    const Array ub = ad::forward(ad::gather_rows(ad::constant(u), rows));
    const Array vb = ad::forward(ad::gather_rows(ad::constant(v), rows));
    const double b = mine_ascent_step(T, ub, vb, config.learning_rate, rng);
    if (trace) trace->bound.push_back(b);
  }
  return T;
}

double estimate_mi(const StatisticsNetwork& T, const Array& u, const Array& v, Rng& rng) {
  const auto perm = random_permutation(u.rows(), rng);
  return mine_bound(T, ad::constant(u), ad::constant(v), perm, ad::Params::frozen).value().item();
}

}  // namespace icil::mine
