#include "icil/learner/common.hpp"

#include <cmath>
#include <random>

#include "icil/common/error.hpp"

namespace icil::learner {

StratifiedSampler::StratifiedSampler(const env::TransitionTable& table, std::vector<int> env_order,
                                     std::size_t batch, std::uint64_t seed)
    : groups_(table.rows_by_env(env_order)), env_order_(std::move(env_order)), rng_(derive_seed(seed, "batches")) {
  if (env_order_.empty()) throw ConfigError("sampler: no environments");
  if (batch < env_order_.size()) throw ConfigError("sampler: batch smaller than the number of environments");
  per_env_ = batch / env_order_.size();
  for (std::size_t k = 0; k < groups_.size(); ++k) {
    if (groups_[k].empty()) {
      throw ConfigError("sampler: environment " + std::to_string(env_order_[k]) + " has no transitions");
    }
  }
}

Batch StratifiedSampler::next() {
  Batch b;
  b.envs = groups_.size();
  b.per_env = per_env_;
  b.rows.reserve(b.envs * per_env_);
  for (std::size_t k = 0; k < groups_.size(); ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, groups_[k].size() - 1);
    for (std::size_t i = 0; i < per_env_; ++i) {
      b.rows.push_back(groups_[k][pick(rng_)]);
      b.env_index.push_back(static_cast<int>(k));
    }
  }
  return b;
}

int greedy_action(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("greedy_action: empty logits");
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[best]) best = k;
  }
  return static_cast<int>(best);
}

int sample_action(std::span<const double> logits, Rng& rng) {
  if (logits.empty()) throw ShapeError("sample_action: empty logits");
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  std::vector<double> w(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) w[k] = std::exp(logits[k] - m);
  std::discrete_distribution<int> d(w.begin(), w.end());
  return d(rng);
}

ad::Array gumbel_noise(std::size_t rows, std::size_t cols, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ad::Array g({rows, cols});
  for (double& v : g.data()) {
    double x = u(rng);
    while (x <= 0.0) x = u(rng);
    v = -std::log(-std::log(x));
  }
  return g;
}

ad::Array drop_last_column(const ad::Array& x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (d < 2) throw ShapeError("drop_last_column: need at least two columns");
  ad::Array out({n, d - 1});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c + 1 < d; ++c) out.at(r, c) = x.at(r, c);
  }
  return out;
}

}  // namespace icil::learner
