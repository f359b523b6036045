#include "s3t/error.hpp"
#include "s3t/model.hpp"

#include <cmath>

namespace s3t::model {

using num::Tensor;
using num::Var;

namespace {

Var linear(Var x, const Linear<Var>& l) { return num::add_row(num::matmul(x, l.weight), l.bias); }

Var drop(Var x, double rate, const ForwardOptions& opts) {
  if (!opts.training || rate == 0.0) return x;
  if (opts.rng == nullptr) throw UsageError("training-mode forward pass needs a random generator for dropout");
  return num::dropout(x, rate, true, *opts.rng);
}

}  // namespace

Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      t.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m(r, c);
    }
  }
  return t;
}

Var spatial_attention(Var z, const SpatialAttention<Var>& p, const ModelConfig& config, const ForwardOptions& opts) {
  const std::size_t channels = z.value().rows();
  if (channels < 2) {
    throw ConfigError("feature-channel attention needs at least 2 feature channels, got " + std::to_string(channels));
  }
  // Projections act on the channel dimension at every time step.
  const Var zt = num::transpose(z);                   // T x C_f
  const Var q = num::transpose(linear(zt, p.query));  // C_f x T (widths equal C_f)
  const Var kt = linear(zt, p.key);                   // T x C_f
  const Var v = num::transpose(linear(zt, p.value));  // C_f x T

  const double scaling = 1.0 / std::sqrt(static_cast<double>(p.key.weight.value().cols()));
  const Var scores = num::softmax_rows(num::scale(num::matmul(q, kt), scaling));  // C_f x C_f
  if (opts.trace) opts.trace->spatial_scores = scores.value();
  const Var attended = num::matmul(scores, v);
  return num::add(z, drop(attended, config.dropout_spatial, opts));
}

Var position_encode(Var x, const PositionEncoding<Var>& p) {
  return num::add(x, num::conv1d_time(x, p.kernel, p.bias));
}

Var compress_channels(Var x) { return num::mean_rows(x); }

Var slice_time(Var x, std::size_t slice_d) {
  const std::size_t total = x.value().size();
  if (slice_d == 0 || total % slice_d != 0) {
    throw ConfigError("signal of length " + std::to_string(total) + " cannot be cut into slices of width " +
                      std::to_string(slice_d) + "; adjust the trial window or the slice size");
  }
  return num::reshape(x, {total / slice_d, slice_d});
}

Var multi_head_attention(Var x, const TemporalBlock<Var>& p, const ModelConfig& config, const ForwardOptions& opts,
                         std::vector<Tensor>* head_scores) {
  const std::size_t h = config.n_heads;
  const std::size_t dk = p.query.weight.value().cols();
  const std::size_t dv = p.value.weight.value().cols();
  if (h == 0 || dk % h != 0 || dv % h != 0) {
    throw ConfigError("d_k = " + std::to_string(dk) + " and d_v = " + std::to_string(dv) +
                      " must be divisible by h = " + std::to_string(h));
  }
  const double scaling = 1.0 / std::sqrt(static_cast<double>(dk / h));
  const Var merged =
      num::attention_heads(linear(x, p.query), linear(x, p.key), linear(x, p.value), h, scaling, head_scores);
  return drop(linear(merged, p.out), config.dropout_temporal, opts);
}

Var temporal_block(Var x, const TemporalBlock<Var>& p, const ModelConfig& config, const ForwardOptions& opts,
                   std::vector<Tensor>* head_scores) {
  const Var normed = num::layer_norm(x, p.norm.gain, p.norm.bias, config.norm_eps);
  const Var x1 = num::add(x, multi_head_attention(normed, p, config, opts, head_scores));
  if (!p.ff) return x1;
  const FeedForward<Var>& ff = *p.ff;
  const Var n1 = num::layer_norm(x1, ff.norm.gain, ff.norm.bias, config.norm_eps);
  const Var inner = drop(num::gelu(linear(n1, ff.expand)), config.dropout_temporal, opts);
  return num::add(x1, linear(inner, ff.project));
}

Var classify_logits(Var x, const Head<Var>& p, const ModelConfig& config) {
  const Var pooled = num::mean_rows(x);
  const Var normed = num::layer_norm(pooled, p.norm.gain, p.norm.bias, config.norm_eps);
  return linear(normed, p.fc);
}

Var forward_logits(Var z, const BoundParams& params, const ModelConfig& config, const ForwardOptions& opts) {
  const Tensor& zv = z.value();
  if (zv.rank() != 2 || zv.rows() != config.n_feature_channels || zv.cols() != config.samples) {
    throw DimensionError("model expects input [" + std::to_string(config.n_feature_channels) + "x" +
                         std::to_string(config.samples) + "], got " + num::to_string(zv.shape()));
  }
  Var x = z;
  if (params.spatial) x = spatial_attention(x, *params.spatial, config, opts);
  if (params.posenc) x = position_encode(x, *params.posenc);
  x = slice_time(compress_channels(x), config.slice_d);
  if (opts.trace) opts.trace->block_scores.clear();
  for (const auto& block : params.blocks) {
    std::vector<Tensor>* scores = nullptr;
    if (opts.trace) scores = &opts.trace->block_scores.emplace_back();
    x = temporal_block(x, block, config, opts, scores);
  }
  return classify_logits(x, params.head, config);
}

Var forward(Var z, const BoundParams& params, const ModelConfig& config, const ForwardOptions& opts) {
  return num::softmax_rows(forward_logits(z, params, config, opts));
}

std::vector<double> predict_proba(const ModelParams& params, const ModelConfig& config, const Eigen::MatrixXd& z,
                                  ForwardTrace* trace) {
  num::Tape tape;
  const BoundParams bound = bind(tape, params, false);
  ForwardOptions opts;
  opts.trace = trace;
  const Var probs = forward(tape.constant(to_tensor(z)), bound, config, opts);
  const auto values = probs.value().values();
  return {values.begin(), values.end()};
}

}  // namespace s3t::model
