#include "icil/learner/icil.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "icil/ad/checkpoint.hpp"
#include "icil/common/error.hpp"

namespace icil::learner {

using ad::Array;
using ad::Mlp;
using ad::MlpSpec;
using ad::Params;
using ad::Var;

void IcilConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("icil: bad learning rate");
  if (batch < 2) throw ConfigError("icil: batch must be at least 2");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("icil: temperature must be > 0");
  if (hidden_dim == 0) throw ConfigError("icil: hidden_dim must be positive");
}

nlohmann::json IcilConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"batch", batch},
          {"iterations", iterations},
          {"state_dim", state_dim},
          {"noise_dim", noise_dim},
          {"temperature", temperature},
          {"hidden_dim", hidden_dim},
          {"hidden_layers", hidden_layers},
          {"losses", {{"inv", losses.inv}, {"dyn", losses.dyn}, {"mi", losses.mi}, {"energy", losses.energy}}},
          {"phi_sees_env_identifier", phi_sees_env_identifier}};
}

IcilConfig IcilConfig::from_json(const nlohmann::json& j) {
  IcilConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch = j.value("batch", c.batch);
  c.iterations = j.value("iterations", c.iterations);
  c.state_dim = j.value("state_dim", c.state_dim);
  c.noise_dim = j.value("noise_dim", c.noise_dim);
  c.temperature = j.value("temperature", c.temperature);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  if (j.contains("losses")) {
    const auto& l = j.at("losses");
    c.losses.inv = l.value("inv", true);
    c.losses.dyn = l.value("dyn", true);
    c.losses.mi = l.value("mi", true);
    c.losses.energy = l.value("energy", true);
  }
  c.phi_sees_env_identifier = j.value("phi_sees_env_identifier", c.phi_sees_env_identifier);
  c.validate();
  return c;
}

std::size_t IcilLayout::encoder_input_dim() const {
  return (has_env_identifier && !phi_sees_env_identifier) ? obs_dim - 1 : obs_dim;
}

nlohmann::json IcilLayout::to_json() const {
  return {{"obs_dim", obs_dim},
          {"action_count", action_count},
          {"env_ids", env_ids},
          {"state_dim", state_dim},
          {"noise_dim", noise_dim},
          {"has_env_identifier", has_env_identifier},
          {"phi_sees_env_identifier", phi_sees_env_identifier},
          {"hidden_dim", hidden_dim},
          {"hidden_layers", hidden_layers}};
}

IcilLayout IcilLayout::from_json(const nlohmann::json& j) {
  IcilLayout l;
  l.obs_dim = j.at("obs_dim").get<std::size_t>();
  l.action_count = j.at("action_count").get<std::size_t>();
  l.env_ids = j.at("env_ids").get<std::vector<int>>();
  l.state_dim = j.at("state_dim").get<std::size_t>();
  l.noise_dim = j.at("noise_dim").get<std::size_t>();
  l.has_env_identifier = j.at("has_env_identifier").get<bool>();
  l.phi_sees_env_identifier = j.at("phi_sees_env_identifier").get<bool>();
  l.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  l.hidden_layers = j.at("hidden_layers").get<std::size_t>();
  return l;
}

IcilModel::IcilModel(IcilLayout layout, env::Standardizer standardizer, std::uint64_t seed)
    : layout_(std::move(layout)), standardizer_(std::move(standardizer)) {
  const auto& L = layout_;
  if (L.env_ids.empty()) throw ConfigError("icil: model needs at least one training env");
  if (L.state_dim == 0 || L.noise_dim == 0) throw ConfigError("icil: representation dims must be positive");
  if (L.action_count < 2) throw ConfigError("icil: need at least two actions");
  if (standardizer_.dim() != L.obs_dim) throw ShapeError("icil: standardizer width differs from observation dim");
  if (L.has_env_identifier && L.obs_dim < 2) throw ShapeError("icil: identifier column leaves no features");
  const std::size_t in = L.encoder_input_dim(), A = L.action_count, h = L.hidden_dim, k = L.hidden_layers;
  auto spec = [&](std::size_t i, std::size_t o) { return MlpSpec{i, o, h, k, ad::Activation::elu}; };

  phi = Mlp("phi", spec(in, L.state_dim), seed);
  for (int e : L.env_ids) {
    mu.emplace_back("mu/e" + std::to_string(e), spec(in, L.noise_dim), seed);
    g_eta.emplace_back("g_eta/e" + std::to_string(e), spec(L.noise_dim + A, L.noise_dim), seed);
  }
  g_s = Mlp("g_s", spec(L.state_dim + A, L.state_dim), seed);
  psi = Mlp("psi", spec(L.state_dim + L.noise_dim, L.obs_dim), seed);
  classifier = Mlp("classifier", spec(L.state_dim, L.env_ids.size()), seed);
  pi = Mlp("pi", spec(L.state_dim, A), seed);
  mine = mine::StatisticsNetwork("mine", L.state_dim, L.noise_dim, seed, h, k);
}

std::size_t IcilModel::env_index(int env_id) const {
  const auto it = std::find(layout_.env_ids.begin(), layout_.env_ids.end(), env_id);
  if (it == layout_.env_ids.end()) throw ConfigError("icil: env " + std::to_string(env_id) + " is not a training env");
  return static_cast<std::size_t>(it - layout_.env_ids.begin());
}

Array IcilModel::encoder_input(const Array& standardized) const {
  if (layout_.encoder_input_dim() == layout_.obs_dim) return standardized;
  return drop_last_column(standardized);
}

Array IcilModel::state_features(const Array& raw) const {
  if (raw.rank() != 2 || raw.cols() != layout_.obs_dim) {
    throw ShapeError("icil: expected observations [n," + std::to_string(layout_.obs_dim) + "], got " +
                     raw.shape_string());
  }
  return phi.predict(encoder_input(standardizer_.apply(raw)));
}

Array IcilModel::logits(const Array& raw) const { return pi.predict(state_features(raw)); }

int IcilModel::act(std::span<const double> raw, ActMode mode, Rng* rng) const {
  const Array l = logits(Array::matrix(1, raw.size(), {raw.begin(), raw.end()}));
  if (mode == ActMode::greedy) return greedy_action(l.data());
  if (rng == nullptr) throw ConfigError("icil: sampling needs a generator");
  return sample_action(l.data(), *rng);
}

double IcilModel::classifier_entropy(const Array& raw) const {
  const Array p = ad::softmax(ad::constant(classifier.predict(state_features(raw)))).value();
  double total = 0.0;
  for (double v : p.data()) {
    if (v > 0.0) total -= v * std::log(v);
  }
  return total / static_cast<double>(p.rows());
}

std::vector<ad::ParameterStore*> IcilModel::stores() {
  std::vector<ad::ParameterStore*> out{&phi.params()};
  for (auto& m : mu) out.push_back(&m.params());
  out.push_back(&g_s.params());
  for (auto& g : g_eta) out.push_back(&g.params());
  for (Mlp* m : {&psi, &classifier, &pi}) out.push_back(&m->params());
  out.push_back(&mine.params());
  return out;
}

std::vector<const ad::ParameterStore*> IcilModel::stores() const {
  auto mutable_stores = const_cast<IcilModel*>(this)->stores();
  return {mutable_stores.begin(), mutable_stores.end()};
}

void IcilModel::zero_grad() {
  for (auto* s : stores()) s->zero_grad();
}

void IcilModel::save(const std::filesystem::path& path, const IcilConfig& config) const {
  ad::Checkpoint ckpt;
  ckpt.metadata = nlohmann::json{{"kind", "icil"},
                                 {"layout", layout_.to_json()},
                                 {"standardizer", standardizer_.to_json()},
                                 {"config", config.to_json()}}
                      .dump();
  for (const auto* s : stores()) ckpt.append(*s);
  ad::save_checkpoint(path, ckpt);
}

IcilModel IcilModel::load(const std::filesystem::path& path, IcilConfig* config) {
  const ad::Checkpoint ckpt = ad::load_checkpoint(path);
  const auto meta = nlohmann::json::parse(ckpt.metadata);
  if (meta.value("kind", "") != "icil") throw FormatError("'" + path.string() + "' is not an ICIL checkpoint");
  IcilModel m(IcilLayout::from_json(meta.at("layout")), env::Standardizer::from_json(meta.at("standardizer")), 0);
  for (auto* s : m.stores()) {
    if (ckpt.restore(*s) != s->size()) throw FormatError("ICIL checkpoint is missing parameters");
  }
  if (config != nullptr) *config = IcilConfig::from_json(meta.at("config"));
  return m;
}

std::size_t IcilBatch::distinct_envs() const {
  std::vector<int> seen(env_index);
  std::sort(seen.begin(), seen.end());
  return static_cast<std::size_t>(std::unique(seen.begin(), seen.end()) - seen.begin());
}

IcilBatch make_batch(const IcilModel& model, const env::TransitionTable& table, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ShapeError("icil: empty batch");
  if (table.dim != model.layout().obs_dim) throw ShapeError("icil: table width differs from model");
  IcilBatch b;
  const Array x = model.standardizer().apply(table.gather_observations(rows));
  b.x = ad::constant(x);
  b.x_next = ad::constant(model.standardizer().apply(table.gather_next_observations(rows)));
  b.encoder_x = ad::constant(model.encoder_input(x));
  b.actions = table.gather_actions(rows);
  for (int a : b.actions) {
    if (a < 0 || static_cast<std::size_t>(a) >= model.layout().action_count) {
      throw ConfigError("icil: action " + std::to_string(a) + " outside the action set");
    }
  }
  for (std::size_t r : rows) b.env_index.push_back(static_cast<int>(model.env_index(table.env_ids[r])));
  b.actions_one_hot = ad::one_hot(b.actions, model.layout().action_count);
  return b;
}

std::vector<EnvRun> env_runs(std::span<const int> env_index) {
  std::vector<EnvRun> runs;
  for (std::size_t i = 0; i < env_index.size(); ++i) {
    if (env_index[i] < 0) throw ConfigError("icil: negative env index");
    const auto e = static_cast<std::size_t>(env_index[i]);
    if (runs.empty() || runs.back().env != e) {
      runs.push_back({e, i, i + 1});
    } else {
      runs.back().end = i + 1;
    }
  }
  return runs;
}

Var apply_per_env(const std::vector<Mlp>& nets, const Var& x, std::span<const EnvRun> runs, Params mode) {
  if (runs.size() == 1 && runs[0].begin == 0 && runs[0].end == x.value().rows()) {
    if (runs[0].env >= nets.size()) throw ConfigError("icil: no per-env network for env index");
    return nets[runs[0].env].forward(x, mode);
  }
  std::vector<Var> parts;
  parts.reserve(runs.size());
  for (const auto& r : runs) {
    if (r.env >= nets.size()) {
      throw ConfigError("icil: no per-env network registered for env index " + std::to_string(r.env));
    }
    parts.push_back(nets[r.env].forward(ad::slice_rows(x, r.begin, r.end), mode));
  }
  return ad::concat_rows(parts);
}

Var encode_state(const IcilModel& model, const IcilBatch& batch) { return model.phi.forward(batch.encoder_x); }

Var encode_noise(const IcilModel& model, const IcilBatch& batch) {
  return apply_per_env(model.mu, batch.encoder_x, env_runs(batch.env_index));
}

Var loss_inv(const IcilModel& model, const Var& s, const IcilBatch& batch) {
  if (batch.distinct_envs() < 2) throw ConfigError("icil: invariance loss needs rows from at least two envs");
  const Var p = ad::softmax(model.classifier.forward(s, Params::frozen));
  return ad::neg(ad::mean(ad::entropy(p)));
}

Var loss_classifier(const IcilModel& model, const Var& s, const IcilBatch& batch) {
  if (batch.distinct_envs() < 2) throw ConfigError("icil: classifier loss needs rows from at least two envs");
  return ad::cross_entropy(model.classifier.forward(ad::stop_gradient(s)), batch.env_index);
}

Var loss_dyn(const IcilModel& model, const Var& s, const Var& eta, const IcilBatch& batch) {
  const Var a = ad::constant(batch.actions_one_hot);
  const auto runs = env_runs(batch.env_index);
  const Var s_next = model.g_s.forward(ad::concat_cols(s, a));
  const Var eta_next = apply_per_env(model.g_eta, ad::concat_cols(eta, a), runs);
  return ad::mse(model.psi.forward(ad::concat_cols(s_next, eta_next)), batch.x_next);
}

Var loss_mi(const IcilModel& model, const Var& s, const Var& eta, std::span<const std::size_t> perm, Params mode) {
  return mine::mine_bound(model.mine, s, eta, perm, mode);
}

Var loss_pi(const IcilModel& model, const Var& s, const IcilBatch& batch) {
  return ad::cross_entropy(model.pi.forward(s), batch.actions);
}

Var gumbel_action(const Var& logits, double temperature, const Array& noise) {
  if (!(temperature > 0.0)) throw ConfigError("gumbel_action: temperature must be > 0");
  if (!logits.value().all_finite()) throw NumericError("gumbel_action: non-finite logits");
  if (noise.shape() != logits.value().shape()) throw ShapeError("gumbel_action: noise shape differs from logits");
  return ad::gumbel_softmax(logits, noise, temperature);
}

Var gumbel_action(const Var& logits, double temperature, Rng& rng) {
  const Array& l = logits.value();
  return gumbel_action(logits, temperature, gumbel_noise(l.rows(), l.cols(), rng));
}

Var loss_energy(const IcilModel& model, const ebm::EnergyModel& energy_model, const Var& s, const Var& eta,
                const IcilBatch& batch, double temperature, const Array& noise) {
  if (!energy_model.frozen()) throw ConfigError("icil: the energy model must be pre-trained and frozen");
  const Var s0 = ad::stop_gradient(s);
  const Var eta0 = ad::stop_gradient(eta);
  const Var a_bar = gumbel_action(model.pi.forward(s0), temperature, noise);
  const auto runs = env_runs(batch.env_index);
  const Var s_next = model.g_s.forward(ad::concat_cols(s0, a_bar), Params::frozen);
  const Var eta_next = apply_per_env(model.g_eta, ad::concat_cols(eta0, a_bar), runs, Params::frozen);
  const Var x_bar = model.psi.forward(ad::concat_cols(s_next, eta_next), Params::frozen);
  return ad::mean(energy_model.energy(x_bar, model.standardizer(), Params::frozen));
}

namespace {

IcilLayout layout_for(const env::Dataset& ds, const IcilConfig& cfg) {
  IcilLayout L;
  const auto& spec = ds.specs.front();
  L.obs_dim = ds.observation_dim();
  L.action_count = static_cast<std::size_t>(spec.action_count);
  L.env_ids = ds.env_ids();
  L.has_env_identifier = spec.env_identifier;
  L.phi_sees_env_identifier = cfg.phi_sees_env_identifier;
  const std::size_t base = spec.base_dim();
  const std::size_t extra = L.obs_dim - base - (L.has_env_identifier ? 1 : 0);
  L.state_dim = cfg.state_dim ? cfg.state_dim : base;
  L.noise_dim = cfg.noise_dim ? cfg.noise_dim : std::max<std::size_t>(1, extra);
  L.hidden_dim = cfg.hidden_dim;
  L.hidden_layers = cfg.hidden_layers;
  return L;
}

void require_finite(double v, const char* name, std::size_t iteration) {
  if (!std::isfinite(v)) {
    throw NumericError("icil: iteration " + std::to_string(iteration) + ": " + name + " is not finite");
  }
}

double value_of(const Var& v) { return v.value().item(); }

}  // namespace

LossBreakdown icil_iteration(IcilModel& model, const IcilBatch& batch, const ebm::EnergyModel* energy_model,
                             const IcilConfig& cfg, std::span<const std::size_t> perm, const Array& noise,
                             std::size_t iteration) {
  const auto& on = cfg.losses;
  LossBreakdown lb;
  const double lr = cfg.learning_rate;

  // (a) representation, dynamics, decoder and policy update
  const Var s = encode_state(model, batch);
  Var eta;
  if (on.dyn || on.mi || on.energy) eta = encode_noise(model, batch);
  Var total = loss_pi(model, s, batch);
  lb.l_pi = value_of(total);
  require_finite(lb.l_pi, "l_pi", iteration);
  auto accumulate = [&](const Var& term, double& slot, const char* name) {
    slot = value_of(term);
    require_finite(slot, name, iteration);
    total = ad::add(total, term);
  };
  if (on.inv) accumulate(loss_inv(model, s, batch), lb.l_inv, "l_inv");
  if (on.dyn) accumulate(loss_dyn(model, s, eta, batch), lb.l_dyn, "l_dyn");
  if (on.mi) accumulate(loss_mi(model, s, eta, perm, Params::frozen), lb.l_mi, "l_mi");
  if (on.energy) {
    if (energy_model == nullptr) throw ConfigError("icil: energy loss enabled without an energy model");
    accumulate(loss_energy(model, *energy_model, s, eta, batch, cfg.temperature, noise), lb.l_energy, "l_energy");
  }
  ad::backward(total);
  model.phi.params().adam_step(lr);
  model.pi.params().adam_step(lr);
  if (on.dyn || on.mi) {
    for (auto& m : model.mu) m.params().adam_step(lr);
  }
  if (on.dyn) {
    model.g_s.params().adam_step(lr);
    for (auto& g : model.g_eta) g.params().adam_step(lr);
    model.psi.params().adam_step(lr);
  }
  // Frozen heads in L_energy never accumulate; clear anyway so nothing leaks into later steps.
  model.classifier.params().zero_grad();
  model.mine.params().zero_grad();

  // (b) environment classifier on the updated representation
  if (!on.inv && !on.mi) return lb;
  const Var s_new = ad::constant(model.phi.predict(batch.encoder_x.value()));
  if (on.inv) {
    const Var lc = loss_classifier(model, s_new, batch);
    lb.l_c = value_of(lc);
    require_finite(lb.l_c, "l_c", iteration);
    ad::backward(lc);
    model.classifier.params().adam_step(lr);
  }

  // (c) statistics network ascends the bound
  if (on.mi) {
    const auto runs = env_runs(batch.env_index);
    const Var eta_new = ad::constant(apply_per_env(model.mu, batch.encoder_x, runs, Params::frozen).value());
    const Var bound = loss_mi(model, s_new, eta_new, perm, Params::live);
    require_finite(value_of(bound), "l_mi", iteration);
    ad::backward(bound);
    model.mine.params().adam_step(lr, ad::UpdateDirection::ascent);
  }
  return lb;
}

IcilResult train_icil(const env::Dataset& dataset, const ebm::EnergyModel* energy_model, const IcilConfig& config,
                      std::uint64_t seed) {
  config.validate();
  dataset.validate();
  const auto envs = dataset.env_ids();
  if (envs.size() < 2) throw ConfigError("icil: training needs at least two environments");
  if (config.losses.energy) {
    if (energy_model == nullptr) throw ConfigError("icil: energy loss enabled without an energy model");
    if (!energy_model->frozen()) throw ConfigError("icil: the energy model must be pre-trained and frozen");
  }
  const env::TransitionTable table = env::flatten(dataset);
  const env::Standardizer standardizer = env::Standardizer::fit(table);
  if (energy_model != nullptr && config.losses.energy && !(energy_model->standardizer() == standardizer)) {
    throw ConfigError("icil: energy model was fit under a different normalization");
  }

  IcilResult result{IcilModel(layout_for(dataset, config), standardizer, derive_seed(seed, "init")), {}};
  IcilModel& model = result.model;
  StratifiedSampler sampler(table, envs, config.batch, seed);
  Rng perm_rng(derive_seed(seed, "perm"));
  Rng gumbel_rng(derive_seed(seed, "gumbel"));
  result.history.reserve(config.iterations);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const Batch b = sampler.next();
    const IcilBatch batch = make_batch(model, table, b.rows);
    const auto perm = mine::random_permutation(batch.size(), perm_rng);
    const Array noise = gumbel_noise(batch.size(), model.layout().action_count, gumbel_rng);
    result.history.push_back(icil_iteration(model, batch, energy_model, config, perm, noise, it));
  }
  return result;
}

void write_loss_history_csv(const std::vector<LossBreakdown>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.precision(17);
  out << "iter,l_inv,l_dyn,l_mi,l_pi,l_energy,l_c\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& h = history[i];
    out << i << ',' << h.l_inv << ',' << h.l_dyn << ',' << h.l_mi << ',' << h.l_pi << ',' << h.l_energy << ','
        << h.l_c << '\n';
  }
}

}  // namespace icil::learner
