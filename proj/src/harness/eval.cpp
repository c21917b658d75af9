#include "icil/harness/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "icil/common/error.hpp"
#include "icil/env/cartpole.hpp"

namespace icil::harness {

using ad::Array;
using namespace env;

ReturnStats summarize(std::vector<double> values) {
  ReturnStats s;
  s.returns = std::move(values);
  const double n = static_cast<double>(s.returns.size());
  if (s.returns.empty()) return s;
  s.mean = std::accumulate(s.returns.begin(), s.returns.end(), 0.0) / n;
  if (s.returns.size() > 1) {
    double ss = 0.0;
    for (double v : s.returns) ss += (v - s.mean) * (v - s.mean);
    s.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

ReturnStats run_rollout_eval(const learner::LogitFn& policy, const env::EnvironmentSpec& spec, std::size_t episodes,
                             std::uint64_t seed, learner::ActMode mode) {
  if (spec.task != env::Task::cartpole) throw ConfigError("rollout: only the cartpole task has online dynamics");
  if (episodes == 0) throw ConfigError("rollout: episodes must be >= 1");
  spec.validate();
  const std::size_t dim = spec.observation_dim();
  const std::optional<int> id = spec.env_identifier ? std::optional<int>(spec.env_id) : std::nullopt;

  std::vector<Rng> rngs;
  std::vector<CartPoleState> state(episodes);
  std::vector<double> ret(episodes, 0.0);
  rngs.reserve(episodes);
  for (std::size_t i = 0; i < episodes; ++i) {
    rngs.emplace_back(derive_seed(seed, "episode", {i}));
    state[i] = cartpole_reset(rngs[i]);
  }
  std::vector<std::size_t> active(episodes);
  std::iota(active.begin(), active.end(), 0);
  for (int t = 0; t < cartpole::kMaxSteps && !active.empty(); ++t) {
    Array obs({active.size(), dim});
    for (std::size_t r = 0; r < active.size(); ++r) {
      const auto x = env::augment(state[active[r]], spec.intervention, id);
      std::copy(x.begin(), x.end(), obs.data().begin() + static_cast<std::ptrdiff_t>(r * dim));
    }
    const Array logits = policy(obs);
    if (logits.rows() != active.size() || logits.cols() != static_cast<std::size_t>(spec.action_count)) {
      throw ShapeError("rollout: policy returned logits " + logits.shape_string());
    }
    std::vector<std::size_t> still;
    still.reserve(active.size());
    for (std::size_t r = 0; r < active.size(); ++r) {
      const std::size_t i = active[r];
      const auto row = logits.data().subspan(r * logits.cols(), logits.cols());
      const int a = mode == learner::ActMode::greedy ? learner::greedy_action(row) : learner::sample_action(row, rngs[i]);
      const CartPoleStep step = cartpole_step(state[i], a);
      ret[i] += 1.0;
      if (!step.terminated) {
        state[i] = step.next;
        still.push_back(i);
      }
    }
    active = std::move(still);
  }
  return summarize(std::move(ret));
}

double scale_return(double raw, double r_random, double r_expert) {
  const double d = r_expert - r_random;
  if (!(std::fabs(d) > 1e-12) || !std::isfinite(d)) throw ConfigError("scale_return: expert and random returns coincide");
  return (raw - r_random) / d;
}

learner::LogitFn expert_logits(const env::EnvironmentSpec& spec) {
  if (spec.task != env::Task::cartpole) throw ConfigError("expert_logits: cartpole only");
  return [](const Array& obs) {
    Array out({obs.rows(), 2});
    for (std::size_t r = 0; r < obs.rows(); ++r) {
      const CartPoleState s{obs.at(r, 0), obs.at(r, 1), obs.at(r, 2), obs.at(r, 3)};
      out.at(r, static_cast<std::size_t>(scripted_expert(s))) = 1.0;
    }
    return out;
  };
}

learner::LogitFn uniform_logits(std::size_t actions) {
  return [actions](const Array& obs) { return Array({obs.rows(), actions}); };
}

nlohmann::json TaskConstants::to_json() const {
  return {{"r_random", r_random}, {"r_expert", r_expert}, {"episodes", episodes}, {"seed", seed}};
}

TaskConstants TaskConstants::from_json(const nlohmann::json& j) {
  TaskConstants c;
  c.r_random = j.at("r_random").get<double>();
  c.r_expert = j.at("r_expert").get<double>();
  c.episodes = j.value("episodes", std::size_t{0});
  c.seed = j.value("seed", std::uint64_t{0});
  return c;
}

TaskConstants measure_cartpole_constants(std::size_t episodes, std::uint64_t seed) {
  env::EnvironmentSpec plain;
  plain.task = env::Task::cartpole;
  TaskConstants c;
  c.episodes = episodes;
  c.seed = seed;
  c.r_random = run_rollout_eval(uniform_logits(2), plain, episodes, derive_seed(seed, "random"),
                                learner::ActMode::sample)
                   .mean;
  c.r_expert = run_rollout_eval(expert_logits(plain), plain, episodes, derive_seed(seed, "expert")).mean;
  return c;
}

namespace {

struct SweepPoint {
  double tp, fp;
};

// Cumulative (tp, fp) after each group of tied scores, highest score first.
std::vector<SweepPoint> sweep(std::span<const double> scores, std::span<const int> labels, double& pos, double& neg) {
  if (scores.size() != labels.size()) throw ShapeError("sweep: scores and labels differ in length");
  pos = neg = 0.0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ConfigError("sweep: labels must be 0/1");
    (l == 1 ? pos : neg) += 1.0;
  }
  if (pos == 0.0 || neg == 0.0) throw ConfigError("single-class label set: AUC/APR undefined");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<SweepPoint> pts;
  double tp = 0.0, fp = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (labels[order[k]] == 1 ? tp : fp) += 1.0;
    if (k + 1 == order.size() || scores[order[k + 1]] != scores[order[k]]) pts.push_back({tp, fp});
  }
  return pts;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  double pos = 0.0, neg = 0.0;
  const auto pts = sweep(scores, labels, pos, neg);
  double area = 0.0, px = 0.0, py = 0.0;
  for (const auto& p : pts) {
    const double x = p.fp / neg, y = p.tp / pos;
    area += (x - px) * (y + py) / 2.0;
    px = x;
    py = y;
  }
  return area;
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  double pos = 0.0, neg = 0.0;
  const auto pts = sweep(scores, labels, pos, neg);
  // The curve starts at recall 0 with the precision of the first threshold.
  double area = 0.0, pr = 0.0, pp = pts.front().tp / (pts.front().tp + pts.front().fp);
  for (const auto& p : pts) {
    const double r = p.tp / pos, prec = p.tp / (p.tp + p.fp);
    area += (r - pr) * (prec + pp) / 2.0;
    pr = r;
    pp = prec;
  }
  return area;
}

ActionMatching action_matching(const learner::LogitFn& policy, const env::Dataset& test) {
  const env::TransitionTable table = env::flatten(test);
  if (table.size() == 0) throw ConfigError("action_matching: empty test set");
  const Array obs = Array::matrix(table.size(), table.dim, table.observations);
  const Array logits = policy(obs);
  if (logits.cols() != 2 || logits.rows() != table.size()) throw ShapeError("action_matching: binary logits expected");
  std::vector<double> score(table.size());
  double correct = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double l0 = logits.at(i, 0), l1 = logits.at(i, 1);
    score[i] = 1.0 / (1.0 + std::exp(l0 - l1));
    const int a = learner::greedy_action(logits.data().subspan(2 * i, 2));
    if (a == table.actions[i]) correct += 1.0;
  }
  ActionMatching m;
  m.acc = correct / static_cast<double>(table.size());
  m.auc = roc_auc(score, table.actions);
  m.apr = pr_auc(score, table.actions);
  return m;
}

}  // namespace icil::harness
