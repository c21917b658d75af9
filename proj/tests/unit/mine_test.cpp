#include <cmath>
#include <map>
#include <numeric>

#include <gtest/gtest.h>

#include "../support/fixtures.hpp"
#include "icil/common/error.hpp"
#include "icil/mine/mine.hpp"

using namespace icil;
using namespace icil::mine;
using ad::Array;

namespace {

// Zero every weight and set the output bias to c, so T == c.
void make_constant(StatisticsNetwork& T, double c) {
  auto& store = T.params();
  for (const auto& e : store.entries()) store.assign(e.name, Array::zeros_like(e.var.value()));
  const auto& last = store.entries().back();
  store.assign(last.name, Array(last.var.value().shape(), c));
}

}  // namespace

TEST(MineBound, ConstantStatisticGivesZero) {
  StatisticsNetwork T("t", 2, 3, 1);
  make_constant(T, 1.7);
  Rng rng(1);
  const Array u = testkit::uniform_box(16, 2, 1.0, rng), v = testkit::uniform_box(16, 3, 1.0, rng);
  EXPECT_NEAR(estimate_mi(T, u, v, rng), 0.0, 1e-12);
}

TEST(MineBound, InvariantToOutputShift) {
  StatisticsNetwork T("t", 1, 1, 2);
  Rng rng(2);
  auto [u, v] = testkit::correlated_gaussian(64, 0.5, rng);
  const auto perm = random_permutation(64, rng);
  const double before = mine_bound(T, ad::constant(u), ad::constant(v), perm).value().item();
  const auto& bias = T.params().entries().back();
  Array shifted = bias.var.value();
  shifted[0] += 5.0;
  T.params().assign(bias.name, shifted);
  const double after = mine_bound(T, ad::constant(u), ad::constant(v), perm).value().item();
  EXPECT_NEAR(before, after, 1e-9);
}

TEST(MineBound, RejectsDegenerateBatches) {
  StatisticsNetwork T("t", 1, 1, 3);
  const std::vector<std::size_t> one = {0};
  EXPECT_THROW(mine_bound(T, ad::constant(Array::matrix(1, 1, {0.0})), ad::constant(Array::matrix(1, 1, {0.0})), one),
               ShapeError);
  const std::vector<std::size_t> two = {1, 0};
  EXPECT_THROW(mine_bound(T, ad::constant(Array::matrix(2, 1, {0, 1})), ad::constant(Array::matrix(3, 1, {0, 1, 2})),
                          two),
               ShapeError);
}

TEST(MineBound, PermutationIsUniformOverSmallGroup) {
  Rng rng(4);
  std::map<std::vector<std::size_t>, int> counts;
  for (int i = 0; i < 60000; ++i) counts[random_permutation(3, rng)]++;
  EXPECT_EQ(counts.size(), 6u);
  for (const auto& [perm, c] : counts) EXPECT_NEAR(c / 60000.0, 1.0 / 6.0, 0.01);
}

TEST(MineAscent, ZeroLearningRateLeavesParametersUnchanged) {
  StatisticsNetwork T("t", 1, 1, 5);
  const ad::ParameterStore before = T.params();
  Rng rng(5);
  auto [u, v] = testkit::correlated_gaussian(32, 0.9, rng);
  mine_ascent_step(T, u, v, 0.0, rng);
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(before.entries()[i].var.value(), T.params().entries()[i].var.value());
  }
}

TEST(MineAscent, StepMovesParametersAlongTheGradient) {
  StatisticsNetwork T("t", 1, 1, 6);
  Rng rng(6);
  auto [u, v] = testkit::correlated_gaussian(64, 0.9, rng);
  const auto perm = random_permutation(64, rng);
  const ad::Var b = mine_bound(T, ad::constant(u), ad::constant(v), perm);
  ad::backward(b);
  std::vector<Array> grads, values;
  for (const auto& e : T.params().entries()) {
    grads.push_back(e.var.grad());
    values.push_back(e.var.value());
  }
  T.params().adam_step(1e-4, ad::UpdateDirection::ascent);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Array& now = T.params().entries()[i].var.value();
    for (std::size_t k = 0; k < now.size(); ++k) {
      const double delta = now[k] - values[i][k];
      if (grads[i][k] > 1e-12) {
        EXPECT_GT(delta, 0.0);
      } else if (grads[i][k] < -1e-12) {
        EXPECT_LT(delta, 0.0);
      }
    }
  }
  const double after = mine_bound(T, ad::constant(u), ad::constant(v), perm).value().item();
  EXPECT_GT(after, b.value().item());
}

TEST(MineTraining, BoundRisesOnCorrelatedData) {
  Rng rng(7);
  auto [u, v] = testkit::correlated_gaussian(4000, 0.9, rng);
  MineTrace trace;
  train_mine(u, v, {256, 1000, 0.001}, 7, &trace);
  const auto& b = trace.bound;
  const double early = std::accumulate(b.begin(), b.begin() + 100, 0.0) / 100;
  const double late = std::accumulate(b.end() - 100, b.end(), 0.0) / 100;
  EXPECT_GT(late, early + 0.3);
}

TEST(MineTraining, GaussianOracle) {
  Rng rng(derive_seed(0, "mine-oracle"));
  auto [u, v] = testkit::correlated_gaussian(5000, 0.9, rng);
  auto [hu, hv] = testkit::correlated_gaussian(20000, 0.9, rng);
  const StatisticsNetwork T = train_mine(u, v, {}, 0);
  EXPECT_NEAR(estimate_mi(T, hu, hv, rng), testkit::gaussian_mi(0.9), 0.1);
  EXPECT_NEAR(testkit::gaussian_mi(0.9), 0.8304, 1e-4);
}

TEST(MineTraining, IndependentDataStaysNearZero) {
  Rng rng(derive_seed(0, "mine-indep"));
  auto [u, v] = testkit::correlated_gaussian(5000, 0.0, rng);
  auto [hu, hv] = testkit::correlated_gaussian(20000, 0.0, rng);
  const StatisticsNetwork T = train_mine(u, v, {256, 1000, 0.001}, 1);
  EXPECT_LE(estimate_mi(T, hu, hv, rng), 0.1);
}
