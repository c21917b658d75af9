#include "icil/learner/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "icil/ad/checkpoint.hpp"
#include "icil/common/error.hpp"

namespace icil::learner {

using ad::Array;
using ad::Mlp;
using ad::MlpSpec;
using ad::Var;

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::bc: return "bc";
    case BaselineKind::rcal: return "rcal";
    case BaselineKind::bc_irm: return "bc-irm";
    case BaselineKind::rcal_irm: return "rcal-irm";
  }
  return "?";
}

BaselineKind baseline_from_string(const std::string& s) {
  if (s == "bc") return BaselineKind::bc;
  if (s == "rcal") return BaselineKind::rcal;
  if (s == "bc-irm") return BaselineKind::bc_irm;
  if (s == "rcal-irm") return BaselineKind::rcal_irm;
  throw ConfigError("unknown baseline '" + s + "'");
}

bool uses_irm(BaselineKind k) noexcept { return k == BaselineKind::bc_irm || k == BaselineKind::rcal_irm; }
bool uses_rcal(BaselineKind k) noexcept { return k == BaselineKind::rcal || k == BaselineKind::rcal_irm; }

void BaselineConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("baseline: bad learning rate");
  if (batch == 0) throw ConfigError("baseline: batch must be positive");
  if (!(rcal_coeff >= 0.0) || !std::isfinite(rcal_coeff)) throw ConfigError("baseline: rcal_coeff must be >= 0");
  if (!(irm_penalty >= 0.0) || !std::isfinite(irm_penalty)) throw ConfigError("baseline: irm_penalty must be >= 0");
  if (hidden_dim == 0) throw ConfigError("baseline: hidden_dim must be positive");
}

nlohmann::json BaselineConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"batch", batch},
          {"iterations", iterations},
          {"hidden_dim", hidden_dim},
          {"hidden_layers", hidden_layers},
          {"rcal_coeff", rcal_coeff},
          {"irm_penalty", irm_penalty},
          {"arch", arch == PolicyArch::plain ? "plain" : "phi-augmented"},
          {"state_dim", state_dim}};
}

BaselineConfig BaselineConfig::from_json(const nlohmann::json& j) {
  BaselineConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch = j.value("batch", c.batch);
  c.iterations = j.value("iterations", c.iterations);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.rcal_coeff = j.value("rcal_coeff", c.rcal_coeff);
  c.irm_penalty = j.value("irm_penalty", c.irm_penalty);
  const std::string arch = j.value("arch", std::string("plain"));
  if (arch == "plain") {
    c.arch = PolicyArch::plain;
  } else if (arch == "phi-augmented") {
    c.arch = PolicyArch::phi_augmented;
  } else {
    throw ConfigError("baseline: unknown arch '" + arch + "'");
  }
  c.state_dim = j.value("state_dim", c.state_dim);
  c.validate();
  return c;
}

BaselinePolicy::BaselinePolicy(std::size_t obs_dim, std::size_t action_count, env::Standardizer standardizer,
                               PolicyArch arch, std::size_t state_dim, std::size_t hidden_dim,
                               std::size_t hidden_layers, std::uint64_t seed)
    : obs_dim_(obs_dim),
      action_count_(action_count),
      state_dim_(state_dim),
      standardizer_(std::move(standardizer)),
      arch_(arch) {
  if (obs_dim == 0 || action_count < 2) throw ConfigError("baseline: bad policy shape");
  if (standardizer_.dim() != obs_dim) throw ShapeError("baseline: standardizer width differs from observation dim");
  auto spec = [&](std::size_t i, std::size_t o) { return MlpSpec{i, o, hidden_dim, hidden_layers, ad::Activation::elu}; };
  if (arch == PolicyArch::phi_augmented) {
    if (state_dim == 0) throw ConfigError("baseline: phi-augmented policy needs state_dim > 0");
    phi = Mlp("phi", spec(obs_dim, state_dim), seed);
    pi = Mlp("pi", spec(state_dim, action_count), seed);
  } else {
    pi = Mlp("pi", spec(obs_dim, action_count), seed);
  }
}

Var BaselinePolicy::forward(const Var& x) const {
  if (arch_ == PolicyArch::phi_augmented) return pi.forward(phi.forward(x));
  return pi.forward(x);
}

Array BaselinePolicy::logits(const Array& raw) const {
  if (raw.rank() != 2 || raw.cols() != obs_dim_) {
    throw ShapeError("baseline: expected observations [n," + std::to_string(obs_dim_) + "], got " +
                     raw.shape_string());
  }
  const Array x = standardizer_.apply(raw);
  if (arch_ == PolicyArch::phi_augmented) return pi.predict(phi.predict(x));
  return pi.predict(x);
}

int BaselinePolicy::act(std::span<const double> raw, ActMode mode, Rng* rng) const {
  const Array l = logits(Array::matrix(1, raw.size(), {raw.begin(), raw.end()}));
  if (mode == ActMode::greedy) return greedy_action(l.data());
  if (rng == nullptr) throw ConfigError("baseline: sampling needs a generator");
  return sample_action(l.data(), *rng);
}

std::vector<ad::ParameterStore*> BaselinePolicy::stores() {
  if (arch_ == PolicyArch::phi_augmented) return {&phi.params(), &pi.params()};
  return {&pi.params()};
}

std::vector<const ad::ParameterStore*> BaselinePolicy::stores() const {
  auto s = const_cast<BaselinePolicy*>(this)->stores();
  return {s.begin(), s.end()};
}

void BaselinePolicy::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  ad::Checkpoint ckpt;
  ckpt.metadata = nlohmann::json{{"kind", "baseline"},
                                 {"obs_dim", obs_dim_},
                                 {"action_count", action_count_},
                                 {"state_dim", state_dim_},
                                 {"arch", arch_ == PolicyArch::plain ? "plain" : "phi-augmented"},
                                 {"hidden_dim", pi.spec().hidden_dim},
                                 {"hidden_layers", pi.spec().hidden_layers},
                                 {"standardizer", standardizer_.to_json()},
                                 {"extra", extra}}
                      .dump();
  for (const auto* s : stores()) ckpt.append(*s);
  ad::save_checkpoint(path, ckpt);
}

BaselinePolicy BaselinePolicy::load(const std::filesystem::path& path, nlohmann::json* extra) {
  const ad::Checkpoint ckpt = ad::load_checkpoint(path);
  const auto meta = nlohmann::json::parse(ckpt.metadata);
  if (meta.value("kind", "") != "baseline") throw FormatError("'" + path.string() + "' is not a baseline checkpoint");
  const PolicyArch arch = meta.at("arch") == "plain" ? PolicyArch::plain : PolicyArch::phi_augmented;
  BaselinePolicy p(meta.at("obs_dim"), meta.at("action_count"), env::Standardizer::from_json(meta.at("standardizer")),
                   arch, meta.at("state_dim"), meta.at("hidden_dim"), meta.at("hidden_layers"), 0);
  for (auto* s : p.stores()) {
    if (ckpt.restore(*s) != s->size()) throw FormatError("baseline checkpoint is missing parameters");
  }
  if (extra != nullptr) *extra = meta.at("extra");
  return p;
}

PolicyBatch make_policy_batch(const BaselinePolicy& policy, const env::TransitionTable& table,
                              std::span<const std::size_t> rows, std::span<const int> env_index) {
  if (rows.empty()) throw ShapeError("baseline: empty batch");
  if (env_index.size() != rows.size()) throw ShapeError("baseline: env tags do not match rows");
  if (table.dim != policy.obs_dim()) throw ShapeError("baseline: table width differs from policy");
  PolicyBatch b;
  b.x = ad::constant(policy.standardizer().apply(table.gather_observations(rows)));
  if (table.next_observations.size() == table.observations.size()) {
    b.x_next = ad::constant(policy.standardizer().apply(table.gather_next_observations(rows)));
  }
  b.actions = table.gather_actions(rows);
  for (int a : b.actions) {
    if (a < 0 || static_cast<std::size_t>(a) >= policy.action_count()) {
      throw ConfigError("baseline: action " + std::to_string(a) + " outside the action set");
    }
  }
  for (std::size_t r : rows) b.terminal.push_back(table.terminal[r]);
  b.env_index.assign(env_index.begin(), env_index.end());
  return b;
}

PolicyBatch slice(const PolicyBatch& batch, std::size_t begin, std::size_t end) {
  PolicyBatch b;
  b.x = ad::slice_rows(batch.x, begin, end);
  if (batch.x_next.defined()) b.x_next = ad::slice_rows(batch.x_next, begin, end);
  const auto off = [&](const auto& v) { return std::vector(v.begin() + begin, v.begin() + end); };
  b.actions = off(batch.actions);
  b.terminal = off(batch.terminal);
  b.env_index = off(batch.env_index);
  return b;
}

Var bc_loss(const BaselinePolicy& policy, const PolicyBatch& batch) {
  return ad::cross_entropy(policy.forward(batch.x), batch.actions);
}

Var implied_reward(const Var& q, const Var& q_next, std::span<const int> actions,
                   std::span<const std::uint8_t> terminal, double gamma) {
  const std::size_t n = actions.size();
  if (q.value().rows() != n || q_next.value().rows() != n || terminal.size() != n) {
    throw ShapeError("implied_reward: row counts differ");
  }
  Array discount({n, 1});
  for (std::size_t i = 0; i < n; ++i) discount[i] = terminal[i] ? 0.0 : gamma;
  return ad::sub(ad::pick(q, actions), ad::mul(ad::max_rows(q_next), ad::constant(std::move(discount))));
}

Var rcal_loss(const BaselinePolicy& policy, const PolicyBatch& batch, double gamma, double coeff) {
  if (!batch.x_next.defined()) throw ConfigError("rcal: batch has no next observations");
  const Var q = policy.forward(batch.x);
  const Var r = implied_reward(q, policy.forward(batch.x_next), batch.actions, batch.terminal, gamma);
  return ad::add(ad::cross_entropy(q, batch.actions), ad::scale(ad::mean(ad::abs(r)), coeff));
}

Var scaled_risk(const BaselinePolicy& policy, const PolicyBatch& block, BaselineKind kind, double w, double gamma,
                double coeff) {
  const Var q = ad::scale(policy.forward(block.x), w);
  Var risk = ad::cross_entropy(q, block.actions);
  if (uses_rcal(kind)) {
    if (!block.x_next.defined()) throw ConfigError("rcal: batch has no next observations");
    const Var q_next = ad::scale(policy.forward(block.x_next), w);
    const Var r = implied_reward(q, q_next, block.actions, block.terminal, gamma);
    risk = ad::add(risk, ad::scale(ad::mean(ad::abs(r)), coeff));
  }
  return risk;
}

Var risk_scale_gradient(const BaselinePolicy& policy, const PolicyBatch& block, BaselineKind kind, double gamma,
                        double coeff) {
  // d/dw CE(w l, a) = E_softmax(l)[l] - l_a ; d/dw |w r| = |r| at w = 1.
  const Var l = policy.forward(block.x);
  const Var expected = ad::sum_rows(ad::mul(ad::softmax(l), l));
  Var g = ad::mean(ad::sub(expected, ad::pick(l, block.actions)));
  if (uses_rcal(kind)) {
    if (!block.x_next.defined()) throw ConfigError("rcal: batch has no next observations");
    const Var r = implied_reward(l, policy.forward(block.x_next), block.actions, block.terminal, gamma);
    g = ad::add(g, ad::scale(ad::mean(ad::abs(r)), coeff));
  }
  return g;
}

Var irm_penalty(const BaselinePolicy& policy, const PolicyBatch& batch, BaselineKind kind, double gamma,
                double coeff) {
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (i == 0 || batch.env_index[i] != batch.env_index[i - 1]) {
      blocks.emplace_back(i, i + 1);
    } else {
      blocks.back().second = i + 1;
    }
  }
  std::vector<int> distinct(batch.env_index);
  std::sort(distinct.begin(), distinct.end());
  const auto env_count = static_cast<std::size_t>(std::unique(distinct.begin(), distinct.end()) - distinct.begin());
  if (env_count < 2) throw ConfigError("irm: penalty needs minibatches from at least two envs");
  if (blocks.size() != env_count) throw ConfigError("irm: rows of one env must be contiguous");
  Var total;
  for (const auto& [b, e] : blocks) {
    const Var g = risk_scale_gradient(policy, slice(batch, b, e), kind, gamma, coeff);
    const Var sq = ad::square(g);
    total = total.defined() ? ad::add(total, sq) : sq;
  }
  return total;
}

Var baseline_objective(const BaselinePolicy& policy, const PolicyBatch& batch, BaselineKind kind,
                       const BaselineConfig& config, double gamma) {
  Var risk = uses_rcal(kind) ? rcal_loss(policy, batch, gamma, config.rcal_coeff) : bc_loss(policy, batch);
  if (uses_irm(kind)) {
    risk = ad::add(risk, ad::scale(irm_penalty(policy, batch, kind, gamma, config.rcal_coeff), config.irm_penalty));
  }
  return risk;
}

BaselineResult train_baseline(BaselineKind kind, const env::Dataset& dataset, const BaselineConfig& config,
                              std::uint64_t seed) {
  config.validate();
  dataset.validate();
  const auto envs = dataset.env_ids();
  if (uses_irm(kind) && envs.size() < 2) throw ConfigError(to_string(kind) + ": needs at least two environments");
  const env::TransitionTable table = env::flatten(dataset);
  const auto& spec = dataset.specs.front();
  const std::size_t state_dim = config.state_dim ? config.state_dim : spec.base_dim();
  BaselineResult result{BaselinePolicy(table.dim, static_cast<std::size_t>(spec.action_count),
                                       env::Standardizer::fit(table), config.arch, state_dim, config.hidden_dim,
                                       config.hidden_layers, derive_seed(seed, "init")),
                        {}};
  BaselinePolicy& policy = result.policy;
  StratifiedSampler sampler(table, envs, config.batch, seed);
  result.loss.reserve(config.iterations);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const Batch b = sampler.next();
    const PolicyBatch batch = make_policy_batch(policy, table, b.rows, b.env_index);
    const Var objective = baseline_objective(policy, batch, kind, config, spec.gamma);
    const double value = objective.value().item();
    if (!std::isfinite(value)) {
      throw NumericError(to_string(kind) + ": iteration " + std::to_string(it) + ": loss is not finite");
    }
    result.loss.push_back(value);
    ad::backward(objective);
    for (auto* s : policy.stores()) s->adam_step(config.learning_rate);
  }
  return result;
}

}  // namespace icil::learner
