#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "../support/gradcheck.hpp"
#include "../support/random_graphs.hpp"
#include "icil/ad/checkpoint.hpp"
#include "icil/ad/graph.hpp"
#include "icil/ad/mlp.hpp"
#include "icil/ad/params.hpp"
#include "icil/common/error.hpp"

using namespace icil;
using namespace icil::ad;

namespace {

bool bit_equal(const Array& a, const Array& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Forward, SquareOfThree) {
  Var x = parameter(Array::scalar(3.0));
  Var y = mul(x, x);
  EXPECT_DOUBLE_EQ(forward(y).item(), 9.0);
}

TEST(Forward, IdentityMatmul) {
  Var eye = constant(Array::matrix(2, 2, {1, 0, 0, 1}));
  Var v = constant(Array::matrix(2, 1, {1, 2}));
  const Array out = forward(matmul(eye, v));
  EXPECT_EQ(out[0], 1.0);
  EXPECT_EQ(out[1], 2.0);
}

TEST(Forward, AffineEqualsMatmulPlusBias) {
  const Var x = constant(Array::matrix(3, 2, {1.0, -2.0, 0.5, 0.25, 3.0, -1.0}));
  const Var w = constant(Array::matrix(2, 2, {0.1, 0.2, -0.3, 0.4}));
  const Var b = constant(Array::matrix(1, 2, {5.0, -5.0}));
  EXPECT_TRUE(bit_equal(forward(affine(x, w, b)), forward(add(matmul(x, w), b))));
  EXPECT_THROW(affine(x, w, constant(Array::matrix(1, 3, {0, 0, 0}))), ShapeError);
}

TEST(Forward, ZeroWeightEluNetGivesZeroLogits) {
  Mlp net("net", {.input_dim = 3, .output_dim = 2}, 7);
  for (const auto& e : net.params().entries()) net.params().assign(e.name, Array::zeros_like(e.var.value()));
  Array x = Array::matrix(2, 3, {0.3, -5.0, 2.0, 10.0, 1.0, -1.0});
  const Array logits = net.predict(x);
  for (double v : logits.data()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, ShapeMismatchNamesOperationAndShapes) {
  Var a = constant(Array({2, 3}));
  Var b = constant(Array({2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
  }
  EXPECT_THROW(add(constant(Array({2, 3})), constant(Array({3, 2}))), ShapeError);
}

TEST(Forward, LeavesRejectNonFinite) {
  EXPECT_THROW(constant(Array::scalar(std::nan(""))), NumericError);
  EXPECT_THROW(parameter(Array::scalar(INFINITY)), NumericError);
}

TEST(Backward, SquareGradient) {
  Var x = parameter(Array::scalar(3.0));
  backward(mul(x, x));
  EXPECT_DOUBLE_EQ(x.grad().item(), 6.0);
}

TEST(Backward, BeforeForwardIsAnError) {
  EXPECT_THROW(backward(Var()), Error);
  EXPECT_THROW(forward(Var()), Error);
}

TEST(Backward, NonScalarRootIsAnError) {
  Var x = parameter(Array({2, 2}, 1.0));
  EXPECT_THROW(backward(x), ShapeError);
}

TEST(Backward, SoftmaxCrossEntropyMatchesClosedFormAndFiniteDifferences) {
  Array logits = Array::matrix(1, 3, {0.2, -1.3, 0.7});
  const std::vector<int> target{2};
  testkit::GraphFn f = [&](const std::vector<Var>& in) { return cross_entropy(in[0], target); };
  auto analytic = testkit::analytic_gradients(f, {logits});
  auto numeric = testkit::numeric_gradients(f, {logits});
  double z = 0.0;
  for (double v : logits.data()) z += std::exp(v);
  for (std::size_t c = 0; c < 3; ++c) {
    const double expected = std::exp(logits[c]) / z - (c == 2 ? 1.0 : 0.0);
    EXPECT_NEAR(analytic[0][c], expected, 1e-12);
    EXPECT_NEAR(analytic[0][c], numeric[0][c], 1e-8);
  }
}

TEST(Backward, LinearityOverIndependentTerms) {
  Array x0 = Array::matrix(2, 2, {0.5, -0.4, 1.2, 0.1});
  auto grad_of = [&](const testkit::GraphFn& f) { return testkit::analytic_gradients(f, {x0})[0]; };
  testkit::GraphFn f1 = [](const std::vector<Var>& in) { return sum(elu(in[0])); };
  testkit::GraphFn f2 = [](const std::vector<Var>& in) { return mean(square(in[0])); };
  testkit::GraphFn both = [&](const std::vector<Var>& in) { return add(f1(in), f2(in)); };
  Array g1 = grad_of(f1), g2 = grad_of(f2), g12 = grad_of(both);
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(g12[i], g1[i] + g2[i], 1e-14);
}

TEST(Backward, FanOutAccumulates) {
  Var x = parameter(Array::scalar(2.0));
  Var y = add(mul(x, x), scale(x, 3.0));  // x^2 + 3x
  backward(y);
  EXPECT_DOUBLE_EQ(x.grad().item(), 7.0);
}

TEST(Primitives, StopGradientBlocksGradient) {
  Var x = parameter(Array::scalar(1.5));
  Var y = mul(stop_gradient(x), x);
  backward(y);
  EXPECT_DOUBLE_EQ(x.grad().item(), 1.5);  // only the live factor contributes

  Var z = parameter(Array::scalar(1.5));
  backward(sum(stop_gradient(z)));
  EXPECT_TRUE(z.grad().empty() || z.grad().item() == 0.0);
}

TEST(Primitives, EntropyOfUniformTwoClass) {
  Var p = constant(Array::matrix(1, 2, {0.5, 0.5}));
  EXPECT_NEAR(entropy(p).value().item(), std::numbers::ln2, 1e-15);
}

TEST(Primitives, EluLimits) {
  EXPECT_EQ(elu(constant(Array::scalar(0.0))).value().item(), 0.0);
  EXPECT_NEAR(elu(constant(Array::scalar(-800.0))).value().item(), -1.0, 1e-300);
  EXPECT_EQ(elu(constant(Array::scalar(2.5))).value().item(), 2.5);
}

TEST(Primitives, SoftmaxSumsToOneAndEntropyIsBounded) {
  Rng rng(11);
  std::normal_distribution<double> normal(0.0, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + trial % 7;
    Array logits({3, k});
    for (double& v : logits.data()) v = normal(rng);
    Var p = softmax(constant(logits));
    Var h = entropy(p);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += p.value().at(r, c);
      EXPECT_NEAR(s, 1.0, 1e-12);
      EXPECT_GE(h.value()[r], 0.0);
      EXPECT_LE(h.value()[r], std::log(static_cast<double>(k)) + 1e-12);
    }
  }
}

TEST(Primitives, GumbelSoftmaxRejectsNonPositiveTemperature) {
  Var logits = constant(Array({1, 2}));
  EXPECT_THROW(gumbel_softmax(logits, Array({1, 2}), 0.0), Error);
  EXPECT_THROW(gumbel_softmax(logits, Array({1, 2}), -1.0), Error);
}

TEST(Primitives, CrossEntropyRejectsOutOfRangeTarget) {
  const std::vector<int> bad{3};
  EXPECT_THROW(cross_entropy(constant(Array({1, 2})), bad), ShapeError);
}

TEST(GradCheck, RandomGraphsCoverEveryPrimitive) {
  Rng rng(2024);
  for (std::size_t g = 0; g < 2 * testkit::kPrimitives.size(); ++g) {
    auto graph = testkit::make_random_graph(g, rng);
    auto result = testkit::check_gradients(graph.fn, graph.inputs);
    EXPECT_LT(result.max_rel_error, 1e-4) << graph.primitive << " " << result.worst;
  }
}

TEST(GradCheck, DeterministicForwardAndBackward) {
  Rng a(5), b(5);
  auto ga = testkit::make_random_graph(3, a);
  auto gb = testkit::make_random_graph(3, b);
  auto ra = testkit::analytic_gradients(ga.fn, ga.inputs);
  auto rb = testkit::analytic_gradients(gb.fn, gb.inputs);
  for (std::size_t i = 0; i < ra.size(); ++i) EXPECT_TRUE(bit_equal(ra[i], rb[i]));
}

TEST(Adam, ZeroGradientLeavesParametersAndIncrementsStep) {
  ParameterStore store;
  store.add("w", Array::matrix(1, 2, {0.25, -3.0}));
  const Array before = store.get("w").value();
  store.adam_step(0.001);
  EXPECT_TRUE(bit_equal(store.get("w").value(), before));
  EXPECT_EQ(store.entries()[0].t, 1);
  Var(store.get("w")).mutable_grad() = Array::zeros_like(before);
  store.adam_step(0.001);
  EXPECT_TRUE(bit_equal(store.get("w").value(), before));
  EXPECT_EQ(store.entries()[0].t, 2);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // Step 1: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
  ParameterStore store;
  store.add("w", Array::scalar(1.0));
  const double g = 0.37, lr = 0.001;
  Var(store.get("w")).mutable_grad() = Array::scalar(g);
  store.adam_step(lr);
  const double expected = 1.0 - lr * g / (std::fabs(g) + 1e-8);
  EXPECT_NEAR(store.get("w").value().item(), expected, 1e-15);
  EXPECT_NEAR(1.0 - store.get("w").value().item(), lr, 1e-10);
}

TEST(Adam, AscentMovesUphill) {
  ParameterStore store;
  store.add("w", Array::scalar(0.0));
  Var(store.get("w")).mutable_grad() = Array::scalar(2.0);
  store.adam_step(0.01, UpdateDirection::ascent);
  EXPECT_GT(store.get("w").value().item(), 0.0);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParameterStore store;
  store.add("policy/l0/w", Array::scalar(0.0));
  Var(store.get("policy/l0/w")).mutable_grad() = Array::scalar(NAN);
  try {
    store.adam_step(0.001);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("policy/l0/w"), std::string::npos);
  }
}

TEST(Adam, IdenticalStoresStayBitIdentical) {
  Mlp a("net", {.input_dim = 3, .output_dim = 2}, 99);
  Mlp b("net", {.input_dim = 3, .output_dim = 2}, 99);
  Array x = Array::matrix(4, 3, {0.1, 0.2, 0.3, -1, 0, 1, 2, -2, 0.5, 0.7, 0.7, -0.7});
  const std::vector<int> y{0, 1, 1, 0};
  for (int step = 0; step < 25; ++step) {
    backward(cross_entropy(a.forward(constant(x)), y));
    backward(cross_entropy(b.forward(constant(x)), y));
    a.params().adam_step(0.01);
    b.params().adam_step(0.01);
  }
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_TRUE(bit_equal(a.params().entries()[i].var.value(), b.params().entries()[i].var.value()));
  }
}

TEST(ParameterStoreTest, DuplicateNamesRejected) {
  ParameterStore store;
  store.add("a", Array::scalar(0));
  EXPECT_THROW(store.add("a", Array::scalar(1)), ConfigError);
}

TEST(ParameterStoreTest, CopyIsDeep) {
  ParameterStore store;
  store.add("a", Array::scalar(1.0));
  ParameterStore copy = store;
  copy.assign("a", Array::scalar(5.0));
  EXPECT_EQ(store.get("a").value().item(), 1.0);
}

TEST(MlpTest, FrozenForwardDoesNotTouchParameters) {
  Mlp net("net", {.input_dim = 2, .output_dim = 1}, 3);
  Var x = parameter(Array::matrix(1, 2, {0.4, -0.2}));
  backward(sum(net.forward(x, Params::frozen)));
  for (const auto& e : net.params().entries()) EXPECT_TRUE(e.var.grad().empty());
  EXPECT_FALSE(x.grad().empty());
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  Rng rng(8);
  std::normal_distribution<double> normal(0.0, 1e3);
  for (int trial = 0; trial < 5; ++trial) {
    Checkpoint ck;
    ck.metadata = R"({"kind":"test","trial":)" + std::to_string(trial) + "}";
    for (int i = 0; i <= trial; ++i) {
      Shape s{static_cast<std::size_t>(1 + i), static_cast<std::size_t>(2 + trial)};
      Array a(s);
      for (double& v : a.data()) v = normal(rng);
      a[0] = -0.0;
      ck.arrays.push_back({"p" + std::to_string(i), a});
    }
    const auto path = std::filesystem::temp_directory_path() / "icil_ckpt_roundtrip.bin";
    save_checkpoint(path, ck);
    Checkpoint back = load_checkpoint(path);
    EXPECT_EQ(back.metadata, ck.metadata);
    ASSERT_EQ(back.arrays.size(), ck.arrays.size());
    for (std::size_t i = 0; i < ck.arrays.size(); ++i) {
      EXPECT_EQ(back.arrays[i].name, ck.arrays[i].name);
      EXPECT_TRUE(bit_equal(back.arrays[i].value, ck.arrays[i].value));
    }
  }
}

TEST(CheckpointTest, RejectsForeignFile) {
  const auto path = std::filesystem::temp_directory_path() / "icil_not_a_ckpt.bin";
  {
    std::ofstream os(path);
    os << "hello world, definitely not a checkpoint";
  }
  EXPECT_THROW(load_checkpoint(path), FormatError);
}

TEST(Mlp, InputGradientMatchesGraph) {
  for (Activation act : {Activation::elu, Activation::relu}) {
    const Mlp net("g", {5, 3, 16, 2, act}, 12);
    Rng rng(4);
    std::normal_distribution<double> g(0.0, 1.0);
    Array x({7, 5});
    for (double& v : x.data()) v = g(rng);
    Var leaf = parameter(x);
    backward(sum(net.forward(leaf, Params::frozen)));
    const Array fast = net.input_gradient(x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(fast[i], leaf.grad()[i], 1e-12);
  }
}
