#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "icil/ad/array.hpp"
#include "icil/common/rng.hpp"
#include "icil/env/dataset.hpp"

namespace icil::learner {

// One stratified minibatch: `per_env` rows from every training env, stored
// env by env so each env's rows form a contiguous block.
struct Batch {
  std::vector<std::size_t> rows;  // indices into the TransitionTable
  std::vector<int> env_index;     // position of the row's env in the env order
  std::size_t envs = 0;
  std::size_t per_env = 0;

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t block_begin(std::size_t k) const noexcept { return k * per_env; }
  std::size_t block_end(std::size_t k) const noexcept { return (k + 1) * per_env; }
};

// Draws rows uniformly with replacement inside each env. Both ICIL and the
// baselines consume this stream, so equal seeds give equal minibatches.
class StratifiedSampler {
 public:
  StratifiedSampler(const env::TransitionTable& table, std::vector<int> env_order, std::size_t batch,
                    std::uint64_t seed);

  Batch next();
  const std::vector<int>& env_order() const noexcept { return env_order_; }

 private:
  std::vector<std::vector<std::size_t>> groups_;
  std::vector<int> env_order_;
  std::size_t per_env_;
  Rng rng_;
};

enum class ActMode { greedy, sample };

// argmax with the lowest index winning ties.
int greedy_action(std::span<const double> logits);
int sample_action(std::span<const double> logits, Rng& rng);

// Maps raw observations [n,d] to action logits [n,|A|].
using LogitFn = std::function<ad::Array(const ad::Array&)>;

// Standard Gumbel(0,1) noise of the given shape from an open-interval uniform.
ad::Array gumbel_noise(std::size_t rows, std::size_t cols, Rng& rng);

// Columns kept when the env-identifier feature is hidden from a network.
ad::Array drop_last_column(const ad::Array& x);

}  // namespace icil::learner
