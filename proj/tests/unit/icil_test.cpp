#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "../support/routing_audit.hpp"
#include "icil/common/error.hpp"
#include "icil/env/spec.hpp"
#include "icil/learner/baselines.hpp"
#include "icil/learner/icil.hpp"

using namespace icil;
using namespace icil::learner;
using ad::Array;
using ad::Var;

namespace {

void fill(ad::ParameterStore& store, double v) {
  for (const auto& e : store.entries()) store.assign(e.name, Array(e.var.value().shape(), v));
}

// Zero weights, output bias = `bias` (one entry per output unit).
void constant_output(ad::Mlp& net, std::vector<double> bias) {
  fill(net.params(), 0.0);
  const auto& last = net.params().entries().back();
  const std::size_t n = bias.size();
  net.params().assign(last.name, Array::matrix(1, n, std::move(bias)));
}

bool all_zero(const ad::ParameterStore& store) {
  for (const auto& e : store.entries()) {
    for (double v : e.var.grad().data()) {
      if (v != 0.0) return false;
    }
  }
  return true;
}

struct Fixture {
  env::Dataset ds;
  env::TransitionTable table;
  IcilModel model;
  std::vector<std::size_t> rows;
  IcilBatch batch;
  ebm::EnergyModel energy;
  std::vector<std::size_t> perm;
  Array noise;

  explicit Fixture(std::uint64_t seed, std::size_t hidden = 16) {
    ds = env::generate_dataset(env::cartpole_training_specs(3), 2, seed);
    table = env::flatten(ds);
    const auto standardizer = env::Standardizer::fit(table);
    IcilLayout L;
    L.obs_dim = ds.observation_dim();
    L.env_ids = ds.env_ids();
    L.state_dim = 4;
    L.noise_dim = 3;
    L.hidden_dim = hidden;
    model = IcilModel(L, standardizer, seed);
    StratifiedSampler sampler(table, L.env_ids, 32, seed);
    rows = sampler.next().rows;
    batch = make_batch(model, table, rows);
    energy = ebm::EnergyModel(L.obs_dim, standardizer, seed);
    energy.freeze();
    Rng rng(seed + 100);
    perm = mine::random_permutation(batch.size(), rng);
    noise = gumbel_noise(batch.size(), 2, rng);
  }

  double energy_loss() {
    return loss_energy(model, energy, encode_state(model, batch), encode_noise(model, batch), batch, 1.0, noise)
        .value()
        .item();
  }
};

IcilConfig small_config(std::size_t iterations) {
  IcilConfig c;
  c.iterations = iterations;
  c.batch = 32;
  c.hidden_dim = 16;
  return c;
}

}  // namespace

TEST(IcilLosses, InvarianceLossOfUniformClassifierIsMinusLn2) {
  Fixture f(1);
  constant_output(f.model.classifier, {0.0, 0.0});
  const Var l = loss_inv(f.model, encode_state(f.model, f.batch), f.batch);
  EXPECT_NEAR(l.value().item(), -std::log(2.0), 1e-12);
}

TEST(IcilLosses, InvarianceLossOfConfidentClassifierIsZero) {
  Fixture f(2);
  constant_output(f.model.classifier, {60.0, -60.0});
  const Var l = loss_inv(f.model, encode_state(f.model, f.batch), f.batch);
  EXPECT_NEAR(l.value().item(), 0.0, 1e-20);
}

TEST(IcilLosses, InvarianceLossLeavesClassifierUntouched) {
  Fixture f(3);
  f.model.zero_grad();
  ad::backward(loss_inv(f.model, encode_state(f.model, f.batch), f.batch));
  EXPECT_TRUE(all_zero(f.model.classifier.params()));
  EXPECT_FALSE(all_zero(f.model.phi.params()));
}

TEST(IcilLosses, ClassifierLossLeavesPhiUntouched) {
  Fixture f(4);
  f.model.zero_grad();
  ad::backward(loss_classifier(f.model, encode_state(f.model, f.batch), f.batch));
  EXPECT_TRUE(all_zero(f.model.phi.params()));
  EXPECT_FALSE(all_zero(f.model.classifier.params()));
}

TEST(IcilLosses, InvarianceLossNeedsTwoEnvsInTheBatch) {
  Fixture f(5);
  const auto by_env = f.table.rows_by_env(f.model.layout().env_ids);
  const std::vector<std::size_t> rows(by_env[0].begin(), by_env[0].begin() + 8);
  const IcilBatch one = make_batch(f.model, f.table, rows);
  EXPECT_EQ(one.distinct_envs(), 1u);
  EXPECT_THROW(loss_inv(f.model, encode_state(f.model, one), one), ConfigError);
}

TEST(IcilLosses, DynamicsLossWithZeroDecoderIsMeanSquaredNorm) {
  Fixture f(6);
  fill(f.model.psi.params(), 0.0);
  const Var l = loss_dyn(f.model, encode_state(f.model, f.batch), encode_noise(f.model, f.batch), f.batch);
  // oracle straight from the raw table and the fitted mean/scale
  const auto& mean = f.model.standardizer().mean();
  const auto& scale = f.model.standardizer().scale();
  double sq = 0.0;
  for (std::size_t row : f.rows) {
    const auto xn = f.table.next_observation(row);
    for (std::size_t j = 0; j < xn.size(); ++j) {
      const double z = (xn[j] - mean[j]) / scale[j];
      sq += z * z;
    }
  }
  EXPECT_NEAR(l.value().item(), sq / static_cast<double>(f.batch.size()), 1e-12);
}

TEST(IcilLosses, PolicyLossOfUniformPolicyIsLn2) {
  Fixture f(7);
  constant_output(f.model.pi, {0.3, 0.3});
  EXPECT_NEAR(loss_pi(f.model, encode_state(f.model, f.batch), f.batch).value().item(), std::log(2.0), 1e-12);
}

TEST(IcilBatching, BatchMatchesStandardizedTable) {
  Fixture f(8);
  ASSERT_EQ(f.batch.size(), 32u);
  EXPECT_EQ(f.batch.distinct_envs(), 2u);
  // env blocks are contiguous and in training-env order
  EXPECT_TRUE(std::is_sorted(f.batch.env_index.begin(), f.batch.env_index.end()));
  for (std::size_t r = 0; r < f.batch.size(); ++r) {
    const int a = f.batch.actions[r];
    EXPECT_EQ(f.batch.actions_one_hot.at(r, static_cast<std::size_t>(a)), 1.0);
    EXPECT_EQ(f.batch.actions_one_hot.at(r, static_cast<std::size_t>(1 - a)), 0.0);
  }
}

TEST(Gumbel, RowsSumToOne) {
  Rng rng(9);
  const Var logits = ad::constant(Array::matrix(3, 2, {0.1, -2.0, 4.0, 4.0, -1.0, 3.0}));
  for (double tau : {0.1, 1.0, 5.0}) {
    const Array y = gumbel_action(logits, tau, rng).value();
    for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(y.at(r, 0) + y.at(r, 1), 1.0, 1e-12);
  }
}

TEST(Gumbel, LowTemperatureIsOneHotArgmax) {
  const Array l = Array::matrix(2, 2, {0.5, 0.0, -1.0, 0.2});
  const Array g = Array::matrix(2, 2, {0.0, 0.1, 0.3, 0.0});
  const Array y = gumbel_action(ad::constant(l), 1e-4, g).value();
  EXPECT_NEAR(y.at(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(y.at(1, 1), 1.0, 1e-12);
}

TEST(Gumbel, ArgmaxFrequenciesMatchSoftmax) {
  const std::size_t n = 100000;
  std::vector<double> lv;
  for (std::size_t i = 0; i < n; ++i) {
    lv.push_back(std::log(0.2));
    lv.push_back(std::log(0.8));
  }
  Rng rng(10);
  const Array y = gumbel_action(ad::constant(Array::matrix(n, 2, std::move(lv))), 1.0, rng).value();
  double ones = 0.0;
  for (std::size_t r = 0; r < n; ++r) ones += y.at(r, 1) > y.at(r, 0) ? 1.0 : 0.0;
  EXPECT_NEAR(ones / static_cast<double>(n), 0.8, 0.01);
}

TEST(Gumbel, RejectsBadInputs) {
  Rng rng(11);
  const Var l = ad::constant(Array::matrix(1, 2, {0.0, 1.0}));
  EXPECT_THROW(gumbel_action(l, 0.0, rng), ConfigError);
  EXPECT_THROW(gumbel_action(l, -1.0, rng), ConfigError);
  EXPECT_THROW(gumbel_action(ad::constant(Array::matrix(1, 2, {NAN, 0.0})), 1.0, rng), NumericError);
  EXPECT_THROW(gumbel_action(l, 1.0, Array::matrix(2, 2, {0, 0, 0, 0})), ShapeError);
}

TEST(Gumbel, NoiseIsFiniteGumbel) {
  Rng rng(12);
  const Array g = gumbel_noise(20000, 2, rng);
  double sum = 0.0;
  for (double v : g.data()) {
    ASSERT_TRUE(std::isfinite(v));
    sum += v;
  }
  // E[Gumbel(0,1)] is the Euler-Mascheroni constant
  EXPECT_NEAR(sum / static_cast<double>(g.size()), 0.5772156649, 0.02);
}

TEST(EnergyLoss, ZeroEnergyModelGivesZeroLossAndGradient) {
  Fixture f(13);
  fill(f.energy.params(), 0.0);
  f.model.zero_grad();
  const Var l = loss_energy(f.model, f.energy, encode_state(f.model, f.batch), encode_noise(f.model, f.batch),
                            f.batch, 1.0, f.noise);
  EXPECT_EQ(l.value().item(), 0.0);
  ad::backward(l);
  for (auto* s : f.model.stores()) EXPECT_TRUE(all_zero(*s));
}

TEST(EnergyLoss, OnlyThePolicyReceivesGradient) {
  Fixture f(14);
  f.model.zero_grad();
  ad::backward(loss_energy(f.model, f.energy, encode_state(f.model, f.batch), encode_noise(f.model, f.batch),
                           f.batch, 1.0, f.noise));
  EXPECT_FALSE(all_zero(f.model.pi.params()));
  EXPECT_TRUE(all_zero(f.model.phi.params()));
  EXPECT_TRUE(all_zero(f.model.psi.params()));
  EXPECT_TRUE(all_zero(f.model.g_s.params()));
  for (const auto& m : f.model.mu) EXPECT_TRUE(all_zero(m.params()));
  for (const auto& g : f.model.g_eta) EXPECT_TRUE(all_zero(g.params()));
  EXPECT_TRUE(all_zero(f.energy.params()));
}

TEST(EnergyLoss, PolicyGradientMatchesFiniteDifferences) {
  Fixture f(15);
  f.model.zero_grad();
  ad::backward(loss_energy(f.model, f.energy, encode_state(f.model, f.batch), encode_noise(f.model, f.batch),
                           f.batch, 1.0, f.noise));
  std::vector<std::pair<std::string, Array>> analytic;
  for (const auto& e : f.model.pi.params().entries()) analytic.emplace_back(e.name, e.var.grad());
  const double h = 1e-6;
  double worst = 0.0;
  for (const auto& [name, grad] : analytic) {
    const Array base = f.model.pi.params().get(name).value();
    for (std::size_t j = 0; j < base.size(); j += 3) {
      Array p = base;
      p[j] = base[j] + h;
      f.model.pi.params().assign(name, p);
      const double up = f.energy_loss();
      p[j] = base[j] - h;
      f.model.pi.params().assign(name, p);
      const double down = f.energy_loss();
      f.model.pi.params().assign(name, base);
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, std::fabs(numeric - grad[j]) / std::max(1.0, std::fabs(numeric)));
    }
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(EnergyLoss, RejectsUnfrozenOrMismatchedEnergyModel) {
  Fixture f(16);
  ebm::EnergyModel loose(f.table.dim, f.model.standardizer(), 1);
  EXPECT_THROW(loss_energy(f.model, loose, encode_state(f.model, f.batch), encode_noise(f.model, f.batch), f.batch,
                           1.0, f.noise),
               ConfigError);
  ebm::EnergyModel other(f.table.dim, env::Standardizer::identity(f.table.dim), 1);
  other.freeze();
  EXPECT_THROW(loss_energy(f.model, other, encode_state(f.model, f.batch), encode_noise(f.model, f.batch), f.batch,
                           1.0, f.noise),
               ConfigError);
}

TEST(GradientRouting, EveryLossReachesExactlyItsAllowedStores) {
  for (std::uint64_t seed : {17u, 18u, 19u}) {
    Fixture f(seed);
    const auto report = testkit::audit_gradient_routing(f.model, f.batch, f.energy, f.perm, f.noise);
    for (const auto& v : report.violations) ADD_FAILURE() << "seed " << seed << ": gradient leak " << v;
    for (const auto& m : report.missing) ADD_FAILURE() << "seed " << seed << ": no gradient along " << m;
  }
}

TEST(IcilIteration, RepresentationDescendsAndStatisticsNetworkAscends) {
  Fixture f(20);
  const IcilModel before = f.model;
  IcilConfig cfg = small_config(1);
  icil_iteration(f.model, f.batch, &f.energy, cfg, f.perm, f.noise, 0);

  // step (a) objective with the classifier and T held at their old values
  auto step_a = [&](const IcilModel& m) {
    const Var s = encode_state(m, f.batch), eta = encode_noise(m, f.batch);
    return loss_pi(m, s, f.batch).value().item() + loss_inv(m, s, f.batch).value().item() +
           loss_dyn(m, s, eta, f.batch).value().item() +
           loss_mi(m, s, eta, f.perm, ad::Params::frozen).value().item() +
           loss_energy(m, f.energy, s, eta, f.batch, 1.0, f.noise).value().item();
  };
  IcilModel hybrid = f.model;
  hybrid.classifier = before.classifier;
  hybrid.mine = before.mine;
  EXPECT_LT(step_a(hybrid), step_a(before));

  // step (c): on the updated features, the new T scores a higher bound than the old one
  const Var s = ad::constant(f.model.phi.predict(f.batch.encoder_x.value()));
  const Var eta = ad::constant(
      apply_per_env(f.model.mu, f.batch.encoder_x, env_runs(f.batch.env_index), ad::Params::frozen).value());
  const double old_bound = mine::mine_bound(before.mine, s, eta, f.perm).value().item();
  const double new_bound = mine::mine_bound(f.model.mine, s, eta, f.perm).value().item();
  EXPECT_GT(new_bound, old_bound);

  // step (b): the classifier descends its cross-entropy on the updated features
  EXPECT_LT(loss_classifier(f.model, s, f.batch).value().item(), loss_classifier(hybrid, s, f.batch).value().item());
}

TEST(IcilIteration, DisabledLossesReportZeroAndFreezeTheirNets) {
  Fixture f(21);
  const IcilModel before = f.model;
  IcilConfig cfg = small_config(1);
  cfg.losses = {false, false, false, false};
  const LossBreakdown lb = icil_iteration(f.model, f.batch, nullptr, cfg, f.perm, f.noise, 0);
  EXPECT_EQ(lb.l_inv, 0.0);
  EXPECT_EQ(lb.l_dyn, 0.0);
  EXPECT_EQ(lb.l_mi, 0.0);
  EXPECT_EQ(lb.l_energy, 0.0);
  EXPECT_EQ(lb.l_c, 0.0);
  EXPECT_GT(lb.l_pi, 0.0);
  auto same = [](const ad::ParameterStore& a, const ad::ParameterStore& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a.entries()[i].var.value() != b.entries()[i].var.value()) return false;
    }
    return true;
  };
  EXPECT_TRUE(same(f.model.psi.params(), before.psi.params()));
  EXPECT_TRUE(same(f.model.g_s.params(), before.g_s.params()));
  EXPECT_TRUE(same(f.model.classifier.params(), before.classifier.params()));
  EXPECT_TRUE(same(f.model.mine.params(), before.mine.params()));
  EXPECT_TRUE(same(f.model.mu[0].params(), before.mu[0].params()));
  EXPECT_FALSE(same(f.model.phi.params(), before.phi.params()));
  EXPECT_FALSE(same(f.model.pi.params(), before.pi.params()));
}

TEST(IcilIteration, NonFiniteLossAbortsNamingIterationAndTerm) {
  Fixture f(22);
  fill(f.energy.params(), 1e200);
  IcilConfig cfg = small_config(1);
  try {
    icil_iteration(f.model, f.batch, &f.energy, cfg, f.perm, f.noise, 7);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("iteration 7"), std::string::npos) << what;
    EXPECT_NE(what.find("l_energy"), std::string::npos) << what;
  }
}

TEST(IcilTraining, HistoryIsDeterministicPerSeed) {
  const auto ds = env::generate_dataset(env::cartpole_training_specs(2), 2, 3);
  const auto standardizer = env::Standardizer::fit(env::flatten(ds));
  ebm::EnergyModel energy(ds.observation_dim(), standardizer, 4);
  energy.freeze();
  const auto cfg = small_config(15);
  const auto a = train_icil(ds, &energy, cfg, 5);
  const auto b = train_icil(ds, &energy, cfg, 5);
  const auto c = train_icil(ds, &energy, cfg, 6);
  ASSERT_EQ(a.history.size(), 15u);
  EXPECT_EQ(a.history, b.history);
  EXPECT_NE(a.history, c.history);
  const Array probe = Array::matrix(1, ds.observation_dim(), std::vector<double>(ds.observation_dim(), 0.1));
  EXPECT_EQ(a.model.logits(probe), b.model.logits(probe));
}

TEST(IcilTraining, EnergyModelIsBitIdenticalAfterTraining) {
  const auto ds = env::generate_dataset(env::cartpole_training_specs(2), 2, 7);
  ebm::EnergyModel energy(ds.observation_dim(), env::Standardizer::fit(env::flatten(ds)), 8);
  energy.freeze();
  const ebm::EnergyModel snapshot = energy;
  train_icil(ds, &energy, small_config(10), 9);
  for (std::size_t i = 0; i < energy.params().size(); ++i) {
    EXPECT_EQ(energy.params().entries()[i].var.value(), snapshot.params().entries()[i].var.value());
  }
}

TEST(IcilTraining, PolicyOnlyAblationEqualsPhiAugmentedBc) {
  const auto ds = env::generate_dataset(env::cartpole_training_specs(3), 2, 10);
  IcilConfig ic = small_config(40);
  ic.losses = {false, false, false, false};
  BaselineConfig bc;
  bc.iterations = ic.iterations;
  bc.batch = ic.batch;
  bc.hidden_dim = ic.hidden_dim;
  bc.arch = PolicyArch::phi_augmented;
  const auto icil_run = train_icil(ds, nullptr, ic, 11);
  const auto bc_run = train_baseline(BaselineKind::bc, ds, bc, 11);
  ASSERT_EQ(bc_run.loss.size(), icil_run.history.size());
  for (std::size_t i = 0; i < bc_run.loss.size(); ++i) EXPECT_EQ(bc_run.loss[i], icil_run.history[i].l_pi) << i;
  const auto table = env::flatten(ds);
  const Array obs = Array::matrix(table.size(), table.dim, table.observations);
  EXPECT_EQ(icil_run.model.logits(obs), bc_run.policy.logits(obs));
}

TEST(IcilTraining, DynamicsLossFallsOverAHundredIterations) {
  const auto ds = env::generate_dataset(env::cartpole_training_specs(3), 3, 12);
  ebm::EnergyModel energy(ds.observation_dim(), env::Standardizer::fit(env::flatten(ds)), 13);
  energy.freeze();
  IcilConfig cfg;
  cfg.iterations = 100;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto run = train_icil(ds, &energy, cfg, seed);
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      head += run.history[i].l_dyn;
      tail += run.history[90 + i].l_dyn;
    }
    EXPECT_LT(tail, head) << "seed " << seed;
  }
}

TEST(IcilTraining, RejectsBadSetups) {
  const auto two = env::generate_dataset(env::cartpole_training_specs(2), 1, 14);
  env::Dataset one = two;
  const int keep = two.env_ids().front();
  std::erase_if(one.trajectories, [&](const env::Trajectory& t) { return t.env_id != keep; });
  std::erase_if(one.specs, [&](const env::EnvironmentSpec& s) { return s.env_id != keep; });
  IcilConfig no_energy = small_config(2);
  no_energy.losses.energy = false;
  EXPECT_THROW(train_icil(one, nullptr, no_energy, 1), ConfigError);
  ebm::EnergyModel energy(two.observation_dim(), env::Standardizer::fit(env::flatten(two)), 1);
  EXPECT_THROW(train_icil(two, &energy, small_config(2), 1), ConfigError);  // not frozen
  EXPECT_THROW(train_icil(two, nullptr, small_config(2), 1), ConfigError);
  ebm::EnergyModel identity(two.observation_dim(), env::Standardizer::identity(two.observation_dim()), 1);
  identity.freeze();
  EXPECT_THROW(train_icil(two, &identity, small_config(2), 1), ConfigError);
  EXPECT_NO_THROW(train_icil(two, nullptr, no_energy, 1));
}

TEST(IcilModelApi, UniformPolicyActsZeroAndUnknownEnvIsAnError) {
  Fixture f(23);
  constant_output(f.model.pi, {1.5, 1.5});
  const std::vector<double> x(f.table.dim, 0.3);
  EXPECT_EQ(f.model.act(x), 0);
  EXPECT_THROW(f.model.env_index(99), ConfigError);
}

TEST(IcilModelApi, CheckpointRoundTrip) {
  Fixture f(24);
  const auto path = std::filesystem::temp_directory_path() / "icil_checkpoint_test.json";
  IcilConfig cfg = small_config(3);
  cfg.temperature = 0.7;
  f.model.save(path, cfg);
  IcilConfig loaded_cfg;
  const IcilModel loaded = IcilModel::load(path, &loaded_cfg);
  std::filesystem::remove(path);
  EXPECT_EQ(loaded_cfg.to_json(), cfg.to_json());
  const Array obs = Array::matrix(f.table.size(), f.table.dim, f.table.observations);
  EXPECT_EQ(loaded.logits(obs), f.model.logits(obs));
  EXPECT_EQ(loaded.layout().to_json(), f.model.layout().to_json());
  EXPECT_EQ(loaded.classifier_entropy(obs), f.model.classifier_entropy(obs));
}

TEST(IcilModelApi, ConfigJsonRoundTripAndValidation) {
  IcilConfig c;
  c.losses.mi = false;
  c.noise_dim = 5;
  EXPECT_EQ(IcilConfig::from_json(c.to_json()).to_json(), c.to_json());
  IcilConfig bad;
  bad.temperature = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.batch = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(IcilModelApi, LossHistoryCsvHeader) {
  const auto path = std::filesystem::temp_directory_path() / "icil_history_test.csv";
  write_loss_history_csv({LossBreakdown{-0.5, 1.0, 0.1, 0.6, 0.2, 0.7}}, path);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  std::filesystem::remove(path);
  EXPECT_EQ(header, "iter,l_inv,l_dyn,l_mi,l_pi,l_energy,l_c");
  EXPECT_EQ(row.substr(0, 2), "0,");
}
