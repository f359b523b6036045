#include "support.hpp"

#include "s3t/error.hpp"
#include "s3t/numcore.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace s3t;
using namespace s3t::num;
using s3t::testing::gradient_check;
using s3t::testing::probe;
using s3t::testing::random_tensor;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tape tape;
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Var out = matmul(tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1})), tape.constant(m));
  EXPECT_EQ(out.value(), m);
}

TEST(Matmul, HandArithmetic) {
  Tape tape;
  const Var out = matmul(tape.constant(Tensor::matrix(1, 2, {1, 2})), tape.constant(Tensor::matrix(2, 1, {3, 4})));
  ASSERT_EQ(out.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(out.value()[0], 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape tape;
  try {
    matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({4, 5})));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  const double err = gradient_check([](Tape& t, const auto& v) { return probe(t, matmul(v[0], v[1])); },
                                    {random_tensor({5, 7}, rng), random_tensor({7, 3}, rng)});
  EXPECT_LT(err, 1e-6);
}

TEST(Softmax, EqualRowIsUniform) {
  Tape tape;
  const Var p = softmax_rows(tape.constant(Tensor::matrix(1, 4, {3, 3, 3, 3})));
  for (double v : p.value().values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, ClosedForm) {
  Tape tape;
  const Var p = softmax_rows(tape.constant(Tensor::matrix(1, 2, {0.0, std::log(3.0)})));
  EXPECT_NEAR(p.value()[0], 0.25, 1e-15);
  EXPECT_NEAR(p.value()[1], 0.75, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  Tape tape;
  const Var p = softmax_rows(tape.constant(Tensor::matrix(1, 2, {1e9, 0.0})));
  EXPECT_NEAR(p.value()[0], 1.0, 1e-12);
  EXPECT_NEAR(p.value()[1], 0.0, 1e-12);
}

TEST(Softmax, NanInputIsNumericError) {
  Tape tape;
  EXPECT_THROW(softmax_rows(tape.constant(Tensor::matrix(1, 2, {NAN, 0.0}))), NumericError);
}

TEST(Softmax, RowsAreStochastic) {
  Rng rng(2);
  Tape tape;
  const Var p = softmax_rows(tape.constant(random_tensor({6, 9}, rng, 5.0)));
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 9; ++c) {
      const double v = p.value().at(r, c);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  const double err =
      gradient_check([](Tape& t, const auto& v) { return probe(t, softmax_rows(v[0])); }, {random_tensor({4, 6}, rng)});
  EXPECT_LT(err, 1e-4);
}

TEST(LayerNorm, ConstantVectorMapsToZero) {
  Tape tape;
  const Var y = layer_norm(tape.constant(Tensor::matrix(1, 4, {2, 2, 2, 2})), tape.constant(Tensor({4}, 1.0)),
                           tape.constant(Tensor({4}, 0.0)));
  for (double v : y.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, OutputHasZeroMeanUnitVariance) {
  Rng rng(4);
  Tape tape;
  const Var y = layer_norm(tape.constant(random_tensor({3, 10}, rng, 3.0)), tape.constant(Tensor({10}, 1.0)),
                           tape.constant(Tensor({10}, 0.0)));
  for (std::size_t r = 0; r < 3; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 10; ++c) mean += y.value().at(r, c) / 10.0;
    for (std::size_t c = 0; c < 10; ++c) var += std::pow(y.value().at(r, c) - mean, 2) / 10.0;
    EXPECT_LT(std::abs(mean), 1e-10);
    EXPECT_NEAR(var, 1.0, 1e-5);
  }
}

TEST(LayerNorm, WidthOneIsConfigError) {
  Tape tape;
  EXPECT_THROW(layer_norm(tape.constant(Tensor({3, 1})), tape.constant(Tensor({1}, 1.0)),
                          tape.constant(Tensor({1}, 0.0))),
               ConfigError);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  const double err = gradient_check(
      [](Tape& t, const auto& v) { return probe(t, layer_norm(v[0], v[1], v[2])); },
      {random_tensor({4, 10}, rng), random_tensor({10}, rng), random_tensor({10}, rng)});
  EXPECT_LT(err, 1e-5);
}

TEST(Gelu, ReferenceValues) {
  EXPECT_EQ(gelu_value(0.0), 0.0);
  EXPECT_NEAR(gelu_value(10.0), 10.0, 1e-6);
  EXPECT_NEAR(gelu_value(1.0), 0.8413447, 1e-7);
  // Phi(-1) = 1 - Phi(1)
  EXPECT_NEAR(gelu_value(-1.0), -(1.0 - 0.8413447460685429), 1e-12);
}

TEST(Gelu, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  const double err =
      gradient_check([](Tape& t, const auto& v) { return probe(t, gelu(v[0])); }, {random_tensor({3, 8}, rng, 2.0)});
  EXPECT_LT(err, 1e-5);
}

TEST(Conv1d, ImpulseKernelIsIdentity) {
  Rng rng(7);
  Tape tape;
  const Tensor x = random_tensor({3, 15}, rng);
  Tensor kernel({3, 5});
  for (std::size_t c = 0; c < 3; ++c) kernel.at(c, 2) = 1.0;
  const Var y = conv1d_time(tape.constant(x), tape.constant(kernel), tape.constant(Tensor({3})));
  EXPECT_EQ(y.value(), x);
}

TEST(Conv1d, ZeroPaddingArithmetic) {
  Tape tape;
  const Var y = conv1d_time(tape.constant(Tensor({1, 6}, 1.0)), tape.constant(Tensor({1, 3}, 1.0)),
                            tape.constant(Tensor({1})));
  const std::vector<double> expected{2, 3, 3, 3, 3, 2};
  for (std::size_t t = 0; t < 6; ++t) EXPECT_DOUBLE_EQ(y.value()[t], expected[t]);
}

TEST(Conv1d, InvalidKernelsAreConfigErrors) {
  Tape tape;
  const Var x = tape.constant(Tensor({2, 10}));
  const Var b = tape.constant(Tensor({2}));
  EXPECT_THROW(conv1d_time(x, tape.constant(Tensor({2, 4})), b), ConfigError);
  EXPECT_THROW(conv1d_time(x, tape.constant(Tensor({2, 11})), b), ConfigError);
}

TEST(Conv1d, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  const double err = gradient_check([](Tape& t, const auto& v) { return probe(t, conv1d_time(v[0], v[1], v[2])); },
                                    {random_tensor({2, 20}, rng), random_tensor({2, 5}, rng), random_tensor({2}, rng)});
  EXPECT_LT(err, 1e-5);
}

TEST(Dropout, RateZeroAndEvalModeAreIdentity) {
  Rng rng(9);
  Tape tape;
  const Tensor x = random_tensor({4, 4}, rng);
  EXPECT_EQ(dropout(tape.constant(x), 0.0, true, rng).value(), x);
  EXPECT_EQ(dropout(tape.constant(x), 0.7, false, rng).value(), x);
}

TEST(Dropout, ZeroFractionAndMeanConcentrate) {
  Rng rng(10);
  Tape tape;
  const std::size_t n = 10000;
  const Var y = dropout(tape.constant(Tensor({n}, 1.0)), 0.5, true, rng);
  std::size_t zeros = 0;
  double mean = 0.0;
  for (double v : y.value().values()) {
    zeros += v == 0.0;
    mean += v / static_cast<double>(n);
  }
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.5, 0.02);
  // Each output is 0 or 2 with equal odds: sd of the mean is 1/sqrt(n).
  EXPECT_NEAR(mean, 1.0, 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Dropout, RateOneIsConfigError) {
  Rng rng(11);
  Tape tape;
  EXPECT_THROW(dropout(tape.constant(Tensor({3})), 1.0, true, rng), ConfigError);
  EXPECT_THROW(dropout(tape.constant(Tensor({3})), -0.1, true, rng), ConfigError);
}

TEST(Dropout, SameSeedReplaysBitIdentically) {
  auto run = [] {
    Rng rng(12);
    Tape tape;
    Rng data(13);
    const Var y = dropout(tape.constant(random_tensor({50}, data)), 0.3, true, rng);
    return y.value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  const Var x = tape.parameter(Tensor::matrix(2, 2, {1, -2, 3, 4}));
  tape.backward(sum(x));
  for (double g : x.grad().values()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwiceInput) {
  Tape tape;
  const Tensor xv = Tensor::matrix(1, 3, {1.5, -2.0, 0.25});
  const Var x = tape.parameter(xv);
  tape.backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * xv[i]);
}

TEST(Backward, NonScalarLossIsUsageError) {
  Tape tape;
  const Var x = tape.parameter(Tensor({2, 2}, 1.0));
  EXPECT_THROW(tape.backward(x), UsageError);
}

TEST(Backward, MultipleUsesAccumulate) {
  Tape tape;
  const Var x = tape.parameter(Tensor::vector({2.0}));
  tape.backward(sum(add(scale(x, 3.0), x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
}

TEST(LinearOps, GradientsMatchFiniteDifferences) {
  Rng rng(14);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({3, 4}, rng);
  const Tensor bias = random_tensor({4}, rng);
  EXPECT_LT(gradient_check([](Tape& t, const auto& v) { return probe(t, transpose(v[0])); }, {a}), 1e-6);
  EXPECT_LT(gradient_check([](Tape& t, const auto& v) { return probe(t, add(v[0], v[1])); }, {a, b}), 1e-6);
  EXPECT_LT(gradient_check([](Tape& t, const auto& v) { return probe(t, add_row(v[0], v[1])); }, {a, bias}), 1e-6);
  EXPECT_LT(gradient_check([](Tape& t, const auto& v) { return probe(t, scale(v[0], -1.7)); }, {a}), 1e-6);
  EXPECT_LT(gradient_check([](Tape& t, const auto& v) { return probe(t, mean_rows(v[0])); }, {a}), 1e-6);
  EXPECT_LT(gradient_check([](Tape& t, const auto& v) { return probe(t, reshape(v[0], {6, 2})); }, {a}), 1e-6);
  EXPECT_LT(gradient_check([](Tape& t, const auto& v) { return probe(t, columns(v[0], 1, 2)); }, {a}), 1e-6);
  EXPECT_LT(gradient_check(
                [](Tape& t, const auto& v) {
                  const std::vector<Var> parts{v[0], v[1]};
                  return probe(t, concat_columns(parts));
                },
                {a, b}),
            1e-6);
  EXPECT_LT(gradient_check(
                [](Tape& t, const auto& v) {
                  const std::vector<Var> parts{v[0], v[1]};
                  return probe(t, concat_rows(parts));
                },
                {a, b}),
            1e-6);
  EXPECT_LT(gradient_check([](Tape& t, const auto& v) { return probe(t, mul(v[0], v[1])); }, {a, b}), 1e-6);
}

// Head-by-head composition of primitive ops, the reference for the fused op.
static Var composed_attention(const std::vector<Var>& in, std::size_t heads, double scale) {
  const std::size_t kw = in[0].value().cols() / heads, vw = in[2].value().cols() / heads;
  std::vector<Var> parts;
  for (std::size_t h = 0; h < heads; ++h) {
    const Var scores = matmul(columns(in[0], h * kw, kw), transpose(columns(in[1], h * kw, kw)));
    const Var s = softmax_rows(num::scale(scores, scale));
    parts.push_back(matmul(s, columns(in[2], h * vw, vw)));
  }
  return concat_columns(parts);
}

TEST(AttentionHeads, MatchesComposedPrimitives) {
  Rng rng(41);
  const std::vector<Tensor> in{random_tensor({6, 4}, rng), random_tensor({6, 4}, rng), random_tensor({6, 6}, rng)};
  Tape tape;
  std::vector<Var> a, b;
  for (const auto& t : in) a.push_back(tape.parameter(t));
  for (const auto& t : in) b.push_back(tape.parameter(t));
  std::vector<Tensor> probs;
  const Var fused = attention_heads(a[0], a[1], a[2], 2, 0.7, &probs);
  const Var ref = composed_attention(b, 2, 0.7);
  ASSERT_EQ(probs.size(), 2u);
  for (std::size_t i = 0; i < fused.value().size(); ++i) EXPECT_NEAR(fused.value()[i], ref.value()[i], 1e-14);
  tape.backward(add(probe(tape, fused), probe(tape, ref)));
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t i = 0; i < in[j].size(); ++i) EXPECT_NEAR(a[j].grad()[i], b[j].grad()[i], 1e-13);
  }
}

TEST(AttentionHeads, GradientMatchesFiniteDifferences) {
  Rng rng(42);
  const double err = gradient_check(
      [](Tape& tape, const std::vector<Var>& v) { return probe(tape, attention_heads(v[0], v[1], v[2], 3, 0.5)); },
      {random_tensor({5, 6}, rng), random_tensor({5, 6}, rng), random_tensor({5, 3}, rng)});
  EXPECT_LT(err, 1e-6);
}

TEST(AttentionHeads, IndivisibleWidthIsError) {
  Tape tape;
  const Var x = tape.constant(Tensor({3, 4}));
  EXPECT_THROW(attention_heads(x, x, x, 3, 1.0), DimensionError);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor w = Tensor::vector({1.0, -2.0});
  const Tensor g({2}, 0.0);
  AdamState state;
  const std::vector<ParamSlot> slots{{"w", &w, &g}};
  adam_step(slots, state);
  EXPECT_EQ(w, Tensor::vector({1.0, -2.0}));
  EXPECT_EQ(state.step_count, 1u);
  adam_step(slots, state);
  EXPECT_EQ(state.step_count, 2u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor w = Tensor::scalar(0.5);
  const Tensor g = Tensor::scalar(1.0);
  AdamState state;
  adam_step(std::vector<ParamSlot>{{"w", &w, &g}}, state);
  // m_hat = 1, v_hat = 1 -> step = lr * 1 / (1 + eps)
  EXPECT_NEAR(w[0], 0.5 - 2e-4 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, ConvexDescentIsMonotoneAfterWarmup) {
  Tensor w = Tensor::scalar(1.0);
  AdamState state;
  state.config.learning_rate = 0.01;
  std::vector<double> path;
  // Steps are close to lr each, so 60 of them stay well clear of the optimum.
  for (int i = 0; i < 60; ++i) {
    const Tensor g = Tensor::scalar(2.0 * w[0]);
    adam_step(std::vector<ParamSlot>{{"w", &w, &g}}, state);
    path.push_back(std::abs(w[0]));
  }
  for (std::size_t i = 10; i < path.size(); ++i) EXPECT_LT(path[i], path[i - 1]) << "step " << i;
  EXPECT_LT(path.back(), 0.5);
}

TEST(Adam, MissingGradientNamesParameter) {
  Tensor w = Tensor::scalar(1.0);
  AdamState state;
  try {
    adam_step(std::vector<ParamSlot>{{"head.fc.weight", &w, nullptr}}, state);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("head.fc.weight"), std::string::npos);
  }
}
