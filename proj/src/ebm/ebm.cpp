#include "icil/ebm/ebm.hpp"

#include <cmath>
#include <random>

#include "icil/ad/checkpoint.hpp"
#include "icil/common/error.hpp"

namespace icil::ebm {

using ad::Array;
using ad::Var;

void EbmConfig::validate() const {
  if (langevin_steps < 1) throw ConfigError("ebm: langevin_steps must be >= 1");
  if (!(step_size > 0.0)) throw ConfigError("ebm: step_size must be > 0");
  if (!(noise_std >= 0.0)) throw ConfigError("ebm: noise_std must be >= 0");
  if (batch == 0 || buffer_capacity == 0) throw ConfigError("ebm: batch and buffer capacity must be positive");
  if (!(restart_prob >= 0.0 && restart_prob <= 1.0)) throw ConfigError("ebm: restart_prob outside [0,1]");
  if (!(learning_rate >= 0.0)) throw ConfigError("ebm: negative learning rate");
}

nlohmann::json EbmConfig::to_json() const {
  return {{"langevin_steps", langevin_steps}, {"step_size", step_size},
          {"noise_std", noise_std},           {"batch", batch},
          {"buffer_capacity", buffer_capacity}, {"restart_prob", restart_prob},
          {"learning_rate", learning_rate},   {"iterations", iterations},
          {"divergence_bound", divergence_bound}, {"hidden_dim", hidden_dim},
          {"hidden_layers", hidden_layers}};
}

EbmConfig EbmConfig::from_json(const nlohmann::json& j) {
  EbmConfig c;
  c.langevin_steps = j.value("langevin_steps", c.langevin_steps);
  c.step_size = j.value("step_size", c.step_size);
  c.noise_std = j.value("noise_std", c.noise_std);
  c.batch = j.value("batch", c.batch);
  c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
  c.restart_prob = j.value("restart_prob", c.restart_prob);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.iterations = j.value("iterations", c.iterations);
  c.divergence_bound = j.value("divergence_bound", c.divergence_bound);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.validate();
  return c;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
  if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(const Array& rows) {
  if (rows.cols() != dim_) throw ShapeError("ReplayBuffer: row width mismatch");
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    const auto begin = rows.data().begin() + static_cast<std::ptrdiff_t>(r * dim_);
    rows_.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(dim_));
    if (rows_.size() > capacity_) rows_.pop_front();
  }
}

std::vector<double> ReplayBuffer::sample(Rng& rng) const {
  if (rows_.empty()) throw Error("ReplayBuffer: sample from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, rows_.size() - 1);
  return rows_[pick(rng)];
}

Array langevin_chain(const InputGradient& grad, Array x0, const LangevinParams& params, Rng& rng,
                     std::vector<std::uint8_t>* diverged) {
  if (params.steps < 1) throw ConfigError("langevin_chain: K must be >= 1");
  if (!(params.step_size > 0.0)) throw ConfigError("langevin_chain: step size must be > 0");
  if (!(params.noise_std >= 0.0)) throw ConfigError("langevin_chain: noise must be >= 0");
  const std::size_t n = x0.rows(), d = x0.cols();
  if (diverged) diverged->assign(n, 0);
  std::normal_distribution<double> noise(0.0, 1.0);
  Array x = std::move(x0);
  std::vector<double> out(d);
  for (int k = 0; k < params.steps; ++k) {
    const Array g = grad(x);
    if (g.shape() != x.shape()) throw ShapeError("langevin_chain: gradient shape differs from the state");
    for (std::size_t r = 0; r < n; ++r) {
      bool bad = false;
      for (std::size_t j = 0; j < d; ++j) {
        out[j] = x.at(r, j) - params.step_size * g.at(r, j) + params.noise_std * noise(rng);
        if (!std::isfinite(out[j]) || std::fabs(out[j]) > params.divergence_bound) bad = true;
      }
      if (diverged && (*diverged)[r]) continue;  // frozen at its last finite value
      if (bad) {
        if (!diverged) {
          throw NumericError("langevin_chain: divergent sample at step " + std::to_string(k + 1) +
                             ", row " + std::to_string(r) + " (step size too large?)");
        }
        (*diverged)[r] = 1;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) x.at(r, j) = out[j];
    }
  }
  return x;
}

EnergyModel::EnergyModel(std::size_t input_dim, env::Standardizer standardizer, std::uint64_t seed,
                         const EbmConfig& config)
    : net_("ebm", {input_dim, 1, config.hidden_dim, config.hidden_layers, ad::Activation::relu}, seed),
      standardizer_(std::move(standardizer)),
      config_(config) {
  if (standardizer_.dim() != input_dim) throw ShapeError("EnergyModel: standardizer width mismatch");
}

Var EnergyModel::energy(const Var& z, const env::Standardizer& caller, ad::Params mode) const {
  if (!(caller == standardizer_)) {
    throw ConfigError("EnergyModel: caller normalization differs from the one the model was trained with");
  }
  return energy(z, mode);
}

Var EnergyModel::energy(const Var& z, ad::Params mode) const {
  if (z.value().cols() != input_dim()) {
    throw ShapeError("EnergyModel: input has " + std::to_string(z.value().cols()) + " columns, expected " +
                     std::to_string(input_dim()));
  }
  return net_.forward(z, mode);
}

Array EnergyModel::energies(const Array& raw) const {
  return net_.predict(standardizer_.apply(raw));
}

Array EnergyModel::input_gradient(const Array& z) const {
  if (z.cols() != input_dim()) throw ShapeError("EnergyModel: input_gradient width mismatch");
  return net_.input_gradient(z);
}

void EnergyModel::save(const std::filesystem::path& path) const {
  ad::Checkpoint ckpt;
  ckpt.metadata = nlohmann::json{{"kind", "ebm"},
                                 {"input_dim", input_dim()},
                                 {"standardizer", standardizer_.to_json()},
                                 {"config", config_.to_json()},
                                 {"frozen", frozen_}}
                      .dump();
  ckpt.append(net_.params());
  ad::save_checkpoint(path, ckpt);
}

EnergyModel EnergyModel::load(const std::filesystem::path& path) {
  const ad::Checkpoint ckpt = ad::load_checkpoint(path);
  const auto meta = nlohmann::json::parse(ckpt.metadata);
  if (meta.value("kind", "") != "ebm") throw FormatError("'" + path.string() + "' is not an EBM checkpoint");
  EnergyModel m(meta.at("input_dim").get<std::size_t>(), env::Standardizer::from_json(meta.at("standardizer")),
                0, EbmConfig::from_json(meta.at("config")));
  if (ckpt.restore(m.params()) != m.params().size()) throw FormatError("EBM checkpoint is missing parameters");
  if (meta.value("frozen", false)) m.freeze();
  return m;
}

ContrastiveLoss contrastive_loss(const Var& e_pos, const Var& e_neg) {
  ContrastiveLoss l;
  l.cd = ad::sub(ad::mean(e_pos), ad::mean(e_neg));
  l.rg = ad::add(ad::mean(ad::square(e_pos)), ad::mean(ad::square(e_neg)));
  l.total = ad::add(l.cd, l.rg);
  return l;
}

EbmResult train_ebm(const Array& observations, const env::Standardizer& standardizer, const EbmConfig& config,
                    std::uint64_t seed) {
  config.validate();
  if (observations.empty() || observations.rows() == 0) throw ConfigError("train_ebm: empty dataset");
  if (observations.rows() < config.batch) {
    throw ConfigError("train_ebm: need at least " + std::to_string(config.batch) + " observations");
  }
  const std::size_t d = observations.cols();
  const Array z = standardizer.apply(observations);
  EnergyModel model(d, standardizer, derive_seed(seed, "ebm-init"), config);
  ReplayBuffer buffer(config.buffer_capacity, d);
  Rng rng(derive_seed(seed, "ebm-train"));
  std::uniform_int_distribution<std::size_t> pick(0, z.rows() - 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const LangevinParams lp{config.langevin_steps, config.step_size, config.noise_std, config.divergence_bound};
  const std::size_t N = config.batch;

  EbmResult result;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::vector<double> pos(N * d), init(N * d);
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t r = pick(rng);
      for (std::size_t j = 0; j < d; ++j) pos[i * d + j] = z.at(r, j);
    }
    for (std::size_t i = 0; i < N; ++i) {
      const bool restart = buffer.empty() || coin(rng) < config.restart_prob;
      if (restart) {
        for (std::size_t j = 0; j < d; ++j) init[i * d + j] = unit(rng);
      } else {
        const auto row = buffer.sample(rng);
        std::copy(row.begin(), row.end(), init.begin() + static_cast<std::ptrdiff_t>(i * d));
      }
    }
    std::vector<std::uint8_t> diverged;
    Array neg = langevin_chain([&](const Array& x) { return model.input_gradient(x); },
                               Array::matrix(N, d, std::move(init)), lp, rng, &diverged);
    for (std::size_t i = 0; i < N; ++i) {
      if (!diverged[i]) continue;
      ++result.log.divergent_chains;
      for (std::size_t j = 0; j < d; ++j) neg.at(i, j) = unit(rng);
    }

    const Var e_pos = model.energy(ad::constant(Array::matrix(N, d, std::move(pos))), ad::Params::live);
    const Var e_neg = model.energy(ad::constant(neg), ad::Params::live);  // constant leaf = Omega
    const ContrastiveLoss l = contrastive_loss(e_pos, e_neg);
    ad::backward(l.total);
    model.params().adam_step(config.learning_rate);
    buffer.push(neg);

    result.log.loss.push_back(l.total.value().item());
    result.log.energy_gap.push_back(l.cd.value().item());
    if (!std::isfinite(result.log.loss.back())) {
      throw NumericError("train_ebm: non-finite loss at iteration " + std::to_string(it));
    }
  }
  result.log.buffer_size = buffer.size();
  model.freeze();
  result.model = std::move(model);
  return result;
}

EbmResult train_ebm(const env::TransitionTable& table, const EbmConfig& config, std::uint64_t seed) {
  const env::Standardizer st = env::Standardizer::fit(table);
  return train_ebm(ad::Array::matrix(table.size(), table.dim, table.observations), st, config, seed);
}

}  // namespace icil::ebm
