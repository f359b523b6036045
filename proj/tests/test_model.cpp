#include "support.hpp"

#include "s3t/error.hpp"
#include "s3t/model.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace s3t;
using namespace s3t::model;
using num::Tape;
using num::Tensor;
using num::Var;
using s3t::testing::gradient_check;
using s3t::testing::probe;
using s3t::testing::random_tensor;

namespace {

ModelConfig tiny(std::size_t cf = 4, std::size_t t = 40, std::size_t d = 4, std::size_t h = 2) {
  ModelConfig c;
  c.n_feature_channels = cf;
  c.samples = t;
  c.slice_d = d;
  c.n_heads = h;
  c.kernel_size = 5;
  c.ff_expansion = 2;
  c.n_blocks = 2;
  c.n_classes = 3;
  return c;
}

std::vector<Tensor> flatten(const ModelParams& p) {
  std::vector<Tensor> out;
  visit_params(p, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

// Rebuilds bound parameters from a flat list of tape variables in visit order.
BoundParams unflatten(const ModelParams& layout, const std::vector<Var>& vars) {
  std::size_t i = 0;
  return map_params<Var>(layout, [&](const std::string&, const Tensor&) { return vars.at(i++); });
}

Tensor eval_block(const TemporalBlock<Tensor>& blk, const Tensor& x, const ModelConfig& c) {
  Tape tape;
  ModelParams p;
  p.blocks.push_back(blk);
  const BoundParams b = bind(tape, p, false);
  return temporal_block(tape.constant(x), b.blocks[0], c, {}).value();
}

}  // namespace

TEST(Config, PaperDefaults) {
  const ModelConfig c;
  EXPECT_EQ(c.slice_d, 10u);
  EXPECT_EQ(c.n_heads, 5u);
  EXPECT_EQ(c.kernel_size, 51u);
  EXPECT_EQ(c.ff_expansion, 4u);
  EXPECT_EQ(c.n_blocks, 3u);
  EXPECT_DOUBLE_EQ(c.dropout_spatial, 0.3);
  EXPECT_DOUBLE_EQ(c.dropout_temporal, 0.5);
}

TEST(Config, ValidationErrors) {
  ModelConfig c = tiny();
  c.samples = 42;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny();
  c.kernel_size = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny();
  c.d_k = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny();
  c.n_feature_channels = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(tiny().validate());
}

TEST(SpatialAttention, ZeroQueryKeyGivesUniformAttention) {
  num::Rng rng(1);
  const ModelConfig c = tiny();
  ModelParams p = init_params(c, 2);
  p.spatial->query.weight.fill(0.0);
  p.spatial->key.weight.fill(0.0);
  const Tensor z = random_tensor({4, 40}, rng);
  Tape tape;
  const BoundParams b = bind(tape, p, false);
  ForwardTrace trace;
  ForwardOptions opts;
  opts.trace = &trace;
  const Tensor out = spatial_attention(tape.constant(z), *b.spatial, c, opts).value();
  // V = (Z^T Wv + bv)^T; every output channel adds the mean V row.
  const Tensor vt = num::add_row(num::matmul(num::transpose(tape.constant(z)), b.spatial->value.weight),
                                 b.spatial->value.bias)
                        .value();
  for (std::size_t t = 0; t < 40; ++t) {
    double mean_v = 0.0;
    for (std::size_t j = 0; j < 4; ++j) mean_v += vt.at(t, j) / 4.0;
    for (std::size_t ch = 0; ch < 4; ++ch) EXPECT_NEAR(out.at(ch, t), z.at(ch, t) + mean_v, 1e-12);
  }
  for (double s : trace.spatial_scores.values()) EXPECT_NEAR(s, 0.25, 1e-15);
}

TEST(SpatialAttention, ZeroValueIsResidualOnly) {
  num::Rng rng(3);
  const ModelConfig c = tiny();
  ModelParams p = init_params(c, 4);
  p.spatial->value.weight.fill(0.0);
  p.spatial->value.bias.fill(0.0);
  const Tensor z = random_tensor({4, 40}, rng);
  Tape tape;
  const BoundParams b = bind(tape, p, false);
  EXPECT_EQ(spatial_attention(tape.constant(z), *b.spatial, c, {}).value(), z);
}

TEST(SpatialAttention, ScoresAreRowStochastic) {
  num::Rng rng(5);
  const ModelConfig c = tiny(6);
  const ModelParams p = init_params(c, 6);
  ForwardTrace trace;
  predict_proba(p, c, Eigen::MatrixXd::Random(6, 40) * 3.0, &trace);
  const Tensor& s = trace.spatial_scores;
  ASSERT_EQ(s.shape(), (num::Shape{6, 6}));
  for (std::size_t r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (std::size_t k = 0; k < 6; ++k) sum += s.at(r, k);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  for (const auto& block : trace.block_scores) {
    for (const auto& head : block) {
      for (std::size_t r = 0; r < head.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t k = 0; k < head.cols(); ++k) sum += head.at(r, k);
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
    }
  }
}

TEST(SpatialAttention, SingleChannelIsConfigError) {
  ModelConfig c = tiny();
  ModelParams p = init_params(c, 1);
  Tape tape;
  const BoundParams b = bind(tape, p, false);
  EXPECT_THROW(spatial_attention(tape.constant(Tensor({1, 40})), *b.spatial, c, {}), ConfigError);
}

TEST(PositionEncoding, ZeroKernelImpulseAndShape) {
  num::Rng rng(7);
  const Tensor x = random_tensor({3, 30}, rng);
  for (std::size_t k : {1u, 5u, 29u}) {
    Tape tape;
    PositionEncoding<Var> zero{tape.constant(Tensor({3, k})), tape.constant(Tensor({3}))};
    EXPECT_EQ(position_encode(tape.constant(x), zero).value(), x);
    Tensor impulse({3, k});
    for (std::size_t c = 0; c < 3; ++c) impulse.at(c, k / 2) = 1.0;
    PositionEncoding<Var> ident{tape.constant(impulse), tape.constant(Tensor({3}))};
    const Tensor y = position_encode(tape.constant(x), ident).value();
    ASSERT_EQ(y.shape(), x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], 2.0 * x[i]);
  }
}

TEST(Compress, MeanOverChannels) {
  Tape tape;
  const Tensor one = Tensor::matrix(1, 3, {1, -2, 5});
  EXPECT_EQ(compress_channels(tape.constant(one)).value(), one);
  const Tensor pm = Tensor::matrix(2, 3, {1, -2, 5, -1, 2, -5});
  for (double v : compress_channels(tape.constant(pm)).value().values()) EXPECT_EQ(v, 0.0);
  for (double v : compress_channels(tape.constant(Tensor({16, 8}, 1.0))).value().values()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Slice, PartitionsSignal) {
  num::Rng rng(8);
  Tape tape;
  const Tensor x = random_tensor({1, 1000}, rng);
  const Tensor s = slice_time(tape.constant(x), 10).value();
  ASSERT_EQ(s.shape(), (num::Shape{100, 10}));
  for (std::size_t i = 0; i < 100; ++i) {
    for (std::size_t j = 0; j < 10; ++j) EXPECT_EQ(s.at(i, j), x[i * 10 + j]);
  }
  const Tensor whole = slice_time(tape.constant(x), 1000).value();
  EXPECT_EQ(whole.shape(), (num::Shape{1, 1000}));
  EXPECT_EQ(whole.reshaped({1, 1000}), x);
  EXPECT_THROW(slice_time(tape.constant(x), 30), ConfigError);
}

TEST(MultiHead, SingleHeadMatchesDirectAttention) {
  num::Rng rng(9);
  ModelConfig c = tiny();
  c.n_heads = 1;
  c.d_k = 4;
  c.d_v = 4;
  const ModelParams p = init_params(c, 10);
  const Tensor x = random_tensor({10, 4}, rng);
  Tape tape;
  const BoundParams b = bind(tape, p, false);
  const auto& blk = b.blocks[0];
  const Var xv = tape.constant(x);
  const Tensor got = multi_head_attention(xv, blk, c, {}).value();
  auto lin = [](Var in, const Linear<Var>& l) { return num::add_row(num::matmul(in, l.weight), l.bias); };
  const Var scores =
      num::softmax_rows(num::scale(num::matmul(lin(xv, blk.query), num::transpose(lin(xv, blk.key))), 0.5));
  const Tensor want = lin(num::matmul(scores, lin(xv, blk.value)), blk.out).value();
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-14);
}

TEST(MultiHead, PermutationEquivariant) {
  num::Rng rng(11);
  const ModelConfig c = tiny();
  const ModelParams p = init_params(c, 12);
  const Tensor x = random_tensor({10, 4}, rng);
  std::vector<std::size_t> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor xp({10, 4});
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 0; j < 4; ++j) xp.at(i, j) = x.at(perm[i], j);
  }
  Tape tape;
  const BoundParams b = bind(tape, p, false);
  const Tensor y = multi_head_attention(tape.constant(x), b.blocks[0], c, {}).value();
  const Tensor yp = multi_head_attention(tape.constant(xp), b.blocks[0], c, {}).value();
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(yp.at(i, j), y.at(perm[i], j), 1e-13);
  }
}

TEST(MultiHead, ZeroProjectionsGiveZero) {
  num::Rng rng(13);
  const ModelConfig c = tiny();
  const ModelParams p = zero_params(c);
  Tape tape;
  const BoundParams b = bind(tape, p, false);
  for (double v : multi_head_attention(tape.constant(random_tensor({10, 4}, rng)), b.blocks[0], c, {}).value().values()) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(MultiHead, IndivisibleWidthIsConfigError) {
  ModelConfig c = tiny();
  ModelParams p = init_params(c, 1);
  c.n_heads = 3;
  Tape tape;
  const BoundParams b = bind(tape, p, false);
  EXPECT_THROW(multi_head_attention(tape.constant(Tensor({10, 4})), b.blocks[0], c, {}), ConfigError);
}

TEST(TemporalBlock, ZeroWeightsAreIdentity) {
  num::Rng rng(14);
  const ModelConfig c = tiny();
  const Tensor x = random_tensor({10, 4}, rng);
  const Tensor y = eval_block(zero_params(c).blocks[0], x, c);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(y, x);
  EXPECT_EQ(eval_block(init_params(c, 3).blocks[0], x, c).shape(), x.shape());
}

TEST(TemporalBlock, GradientMatchesFiniteDifferences) {
  num::Rng rng(15);
  const ModelConfig c = tiny(4, 20, 4, 2);
  ModelParams p;
  p.blocks.push_back(init_params(c, 16).blocks[0]);
  for (auto* t : {&p.blocks[0].norm.bias, &p.blocks[0].ff->norm.bias}) *t = random_tensor(t->shape(), rng, 0.1);
  std::vector<Tensor> inputs = flatten(p);
  inputs.push_back(random_tensor({5, 4}, rng));
  const double err = gradient_check(
      [&](Tape& tape, const std::vector<Var>& v) {
        const std::vector<Var> params(v.begin(), v.end() - 1);
        const BoundParams b = unflatten(p, params);
        return probe(tape, temporal_block(v.back(), b.blocks[0], c, {}));
      },
      inputs);
  EXPECT_LT(err, 1e-4);
}

TEST(Classifier, PoolingAndUniformOutput) {
  num::Rng rng(17);
  const ModelConfig c = tiny();
  ModelParams p = init_params(c, 18);
  Tape tape;
  BoundParams b = bind(tape, p, false);
  Tensor slices({5, 4});
  const Tensor row = random_tensor({4}, rng);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) slices.at(i, j) = row[j];
  }
  const Tensor pooled = num::mean_rows(tape.constant(slices)).value();
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(pooled[j], row[j], 1e-15);

  const Tensor probs = num::softmax_rows(classify_logits(tape.constant(slices), b.head, c)).value();
  double sum = 0.0;
  for (double v : probs.values()) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);

  p.head.fc.weight.fill(0.0);
  p.head.fc.bias.fill(0.0);
  b = bind(tape, p, false);
  for (double v : num::softmax_rows(classify_logits(tape.constant(slices), b.head, c)).value().values()) {
    EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  }
}

TEST(Forward, ProducesProbabilityVector) {
  const ModelConfig c = tiny();
  const ModelParams p = init_params(c, 19);
  const auto probs = predict_proba(p, c, Eigen::MatrixXd::Random(4, 40) * 5.0);
  ASSERT_EQ(probs.size(), 3u);
  double sum = 0.0;
  for (double v : probs) {
    EXPECT_GE(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_THROW(predict_proba(p, c, Eigen::MatrixXd::Zero(4, 41)), DimensionError);
}

TEST(Forward, EvalModeIsDeterministic) {
  const ModelConfig c = tiny();
  const ModelParams p = init_params(c, 20);
  const Eigen::MatrixXd z = Eigen::MatrixXd::Random(4, 40);
  EXPECT_EQ(predict_proba(p, c, z), predict_proba(p, c, z));
}

TEST(Forward, BatchMatchesSingleTrialCalls) {
  ModelConfig c = tiny();
  const ModelParams p = init_params(c, 21);
  std::vector<Eigen::MatrixXd> batch;
  for (int i = 0; i < 50; ++i) batch.push_back(Eigen::MatrixXd::Random(4, 40));
  Tape tape;
  const BoundParams b = bind(tape, p, false);
  std::vector<Var> logits;
  for (const auto& z : batch) logits.push_back(forward_logits(tape.constant(to_tensor(z)), b, c, {}));
  const Tensor probs = num::softmax_rows(num::concat_rows(logits)).value();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto single = predict_proba(p, c, batch[i]);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(probs.at(i, k), single[k]);
  }
}

TEST(Forward, PositionEncodingBreaksSlicePermutationInvariance) {
  num::Rng rng(22);
  ModelConfig c = tiny(4, 40, 4, 2);
  const Eigen::MatrixXd z = Eigen::MatrixXd::Random(4, 40);
  // Reverse slice order (each slice keeps its samples).
  Eigen::MatrixXd zp(4, 40);
  for (int s = 0; s < 10; ++s) zp.middleCols(4 * s, 4) = z.middleCols(4 * (9 - s), 4);

  c.modules.spatial = false;
  c.modules.posenc = false;
  const ModelParams plain = init_params(c, 23);
  const auto a = predict_proba(plain, c, z);
  const auto b = predict_proba(plain, c, zp);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);

  c.modules.posenc = true;
  const ModelParams with_pe = init_params(c, 23);
  const auto pa = predict_proba(with_pe, c, z);
  const auto pb = predict_proba(with_pe, c, zp);
  double diff = 0.0;
  for (std::size_t k = 0; k < 3; ++k) diff += std::abs(pa[k] - pb[k]);
  EXPECT_GT(diff, 1e-6);
}

TEST(Forward, FullModelGradientMatchesFiniteDifferences) {
  num::Rng rng(24);
  const ModelConfig c = tiny(4, 40, 4, 2);
  ModelParams p = init_params(c, 25);
  // Nonzero biases and gains so every path carries gradient.
  visit_params(p, [&](const std::string&, Tensor& t) {
    if (t.rank() == 1) {
      for (auto& v : t.values()) v += 0.1 * random_tensor({1}, rng)[0];
    }
  });
  const Tensor z = random_tensor({4, 40}, rng);
  const double err = gradient_check(
      [&](Tape& tape, const std::vector<Var>& v) {
        const BoundParams b = unflatten(p, v);
        return probe(tape, forward(tape.constant(z), b, c, {}));
      },
      flatten(p));
  EXPECT_LT(err, 1e-4);
}

TEST(ParamCount, Examples) {
  EXPECT_EQ(count_params(ModelParams{}), 0u);
  ModelParams fc_only;
  fc_only.head.fc = {Tensor({10, 4}), Tensor({4})};
  EXPECT_EQ(count_params(fc_only), 44u);
  const auto a = count_params(ModelConfig::dataset_2a());
  const auto b = count_params(ModelConfig::dataset_2b());
  EXPECT_GE(a, 6000u);
  EXPECT_LE(a, 11000u);
  EXPECT_LT(b, a);
}

TEST(ParamCount, AblationRemovesParameters) {
  ModelConfig c = ModelConfig::dataset_2a();
  const auto full = count_params(c);
  for (const auto& drop : {&Modules::spatial, &Modules::temporal, &Modules::posenc, &Modules::ff}) {
    ModelConfig reduced = c;
    reduced.modules.*drop = false;
    EXPECT_LT(count_params(reduced), full);
  }
}
