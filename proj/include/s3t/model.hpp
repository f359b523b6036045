#pragma once

// The S3T network: feature-channel attention, convolutional position
// encoding, channel compression, time slicing, pre-norm temporal transformer
// blocks and a pooled linear classifier.

#include "s3t/numcore.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace s3t::model {

// Which sub-networks are present. Dropping one removes its parameters.
struct Modules {
  bool spatial = true;
  bool temporal = true;
  bool posenc = true;
  bool ff = true;

  friend bool operator==(const Modules&, const Modules&) = default;
};

struct ModelConfig {
  std::size_t n_feature_channels = 16;  // N * S rows of the spatial filter
  std::size_t samples = 1000;           // T
  std::size_t slice_d = 10;
  std::size_t n_heads = 5;
  std::size_t kernel_size = 51;  // k_c
  std::size_t ff_expansion = 4;  // N_f
  std::size_t n_blocks = 3;      // N_a
  std::size_t n_classes = 4;
  // Packed temporal projection widths; unset means n_heads * slice_d so every
  // head projects a full slice.
  std::optional<std::size_t> d_k;
  std::optional<std::size_t> d_v;
  double dropout_spatial = 0.3;
  double dropout_temporal = 0.5;
  double norm_eps = 1e-5;
  Modules modules;

  std::size_t key_width() const { return d_k.value_or(n_heads * slice_d); }
  std::size_t value_width() const { return d_v.value_or(n_heads * slice_d); }
  std::size_t n_slices() const { return slice_d ? samples / slice_d : 0; }

  // Throws ConfigError on the first violated constraint.
  void validate() const;

  static ModelConfig dataset_2a();
  static ModelConfig dataset_2b();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct Linear {
  T weight;  // in x out
  T bias;    // out
};

template <class T>
struct Norm {
  T gain;
  T bias;
};

template <class T>
struct SpatialAttention {
  Linear<T> query, key, value;
};

template <class T>
struct PositionEncoding {
  T kernel;  // C_f x k_c
  T bias;    // C_f
};

template <class T>
struct FeedForward {
  Norm<T> norm;
  Linear<T> expand;   // d -> N_f * d
  Linear<T> project;  // N_f * d -> d
};

template <class T>
struct TemporalBlock {
  Norm<T> norm;
  Linear<T> query, key, value;
  Linear<T> out;
  std::optional<FeedForward<T>> ff;
};

template <class T>
struct Head {
  Norm<T> norm;
  Linear<T> fc;
};

template <class T>
struct Params {
  std::optional<SpatialAttention<T>> spatial;
  std::optional<PositionEncoding<T>> posenc;
  std::vector<TemporalBlock<T>> blocks;
  Head<T> head;
};

using ModelParams = Params<num::Tensor>;
using BoundParams = Params<num::Var>;

// ---- parameter traversal ---------------------------------------------------

namespace detail {

template <class L, class F>
void visit_linear(L& l, const std::string& name, F& f) {
  f(name + ".weight", l.weight);
  f(name + ".bias", l.bias);
}

template <class N, class F>
void visit_norm(N& n, const std::string& name, F& f) {
  f(name + ".gain", n.gain);
  f(name + ".bias", n.bias);
}

template <class U, class T, class F>
Linear<U> map(const Linear<T>& l, const std::string& name, F& f) {
  return {f(name + ".weight", l.weight), f(name + ".bias", l.bias)};
}

template <class U, class T, class F>
Norm<U> map(const Norm<T>& n, const std::string& name, F& f) {
  return {f(name + ".gain", n.gain), f(name + ".bias", n.bias)};
}

}  // namespace detail

// Calls f(name, leaf) for every parameter in a fixed order. P is Params<T>,
// optionally const.
template <class P, class F>
void visit_params(P& p, F&& f) {
  using detail::visit_linear;
  using detail::visit_norm;
  if (p.spatial) {
    visit_linear(p.spatial->query, "spatial.query", f);
    visit_linear(p.spatial->key, "spatial.key", f);
    visit_linear(p.spatial->value, "spatial.value", f);
  }
  if (p.posenc) {
    f(std::string("posenc.kernel"), p.posenc->kernel);
    f(std::string("posenc.bias"), p.posenc->bias);
  }
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b);
    auto& blk = p.blocks[b];
    visit_norm(blk.norm, prefix + ".norm", f);
    visit_linear(blk.query, prefix + ".query", f);
    visit_linear(blk.key, prefix + ".key", f);
    visit_linear(blk.value, prefix + ".value", f);
    visit_linear(blk.out, prefix + ".out", f);
    if (blk.ff) {
      visit_norm(blk.ff->norm, prefix + ".ff.norm", f);
      visit_linear(blk.ff->expand, prefix + ".ff.expand", f);
      visit_linear(blk.ff->project, prefix + ".ff.project", f);
    }
  }
  visit_norm(p.head.norm, "head.norm", f);
  visit_linear(p.head.fc, "head.fc", f);
}

// Builds a Params<U> with the same layout, each leaf produced by
// f(name, const T&) -> U.
template <class U, class T, class F>
Params<U> map_params(const Params<T>& p, F&& f) {
  using detail::map;
  Params<U> out;
  if (p.spatial) {
    out.spatial = SpatialAttention<U>{map<U>(p.spatial->query, "spatial.query", f),
                                      map<U>(p.spatial->key, "spatial.key", f),
                                      map<U>(p.spatial->value, "spatial.value", f)};
  }
  if (p.posenc) {
    out.posenc = PositionEncoding<U>{f(std::string("posenc.kernel"), p.posenc->kernel),
                                     f(std::string("posenc.bias"), p.posenc->bias)};
  }
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b);
    const auto& blk = p.blocks[b];
    TemporalBlock<U> nb{map<U>(blk.norm, prefix + ".norm", f), map<U>(blk.query, prefix + ".query", f),
                        map<U>(blk.key, prefix + ".key", f),   map<U>(blk.value, prefix + ".value", f),
                        map<U>(blk.out, prefix + ".out", f),   std::nullopt};
    if (blk.ff) {
      nb.ff = FeedForward<U>{map<U>(blk.ff->norm, prefix + ".ff.norm", f),
                             map<U>(blk.ff->expand, prefix + ".ff.expand", f),
                             map<U>(blk.ff->project, prefix + ".ff.project", f)};
    }
    out.blocks.push_back(std::move(nb));
  }
  out.head = Head<U>{map<U>(p.head.norm, "head.norm", f), map<U>(p.head.fc, "head.fc", f)};
  return out;
}

// Total number of trainable scalars.
std::size_t count_params(const ModelParams& params);
std::size_t count_params(const ModelConfig& config);

// Parameter tensors shaped from the config: Xavier-uniform projections, zero
// biases, unit layer-norm gains.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// All parameters zero except layer-norm gains (1).
ModelParams zero_params(const ModelConfig& config);

// Registers every parameter on the tape (as trainable leaves or constants).
BoundParams bind(num::Tape& tape, const ModelParams& params, bool trainable);

// Zips bound leaves with the stored tensors for the optimizer.
std::vector<num::ParamSlot> param_slots(ModelParams& params, const BoundParams& bound);

// ---- forward pass ----------------------------------------------------------

// Attention matrices captured during a forward pass.
struct ForwardTrace {
  num::Tensor spatial_scores;                          // C_f x C_f
  std::vector<std::vector<num::Tensor>> block_scores;  // [block][head] n x n
};

struct ForwardOptions {
  bool training = false;
  num::Rng* rng = nullptr;  // required when training with dropout
  ForwardTrace* trace = nullptr;
};

num::Tensor to_tensor(const Eigen::MatrixXd& m);

// Z + dropout(softmax(Q K^T / sqrt(C_f)) V), tokens are feature channels.
num::Var spatial_attention(num::Var z, const SpatialAttention<num::Var>& p, const ModelConfig& config,
                           const ForwardOptions& opts);

// x + conv1d_time(x).
num::Var position_encode(num::Var x, const PositionEncoding<num::Var>& p);

// Mean over feature channels: [C_f x T] -> [1 x T].
num::Var compress_channels(num::Var x);

// [1 x T] -> [T/d x d]; slice i covers samples [i*d, (i+1)*d).
num::Var slice_time(num::Var x, std::size_t slice_d);

// Self-attention over slices with h heads, each scaled by sqrt(d_k / h).
num::Var multi_head_attention(num::Var x, const TemporalBlock<num::Var>& p, const ModelConfig& config,
                              const ForwardOptions& opts, std::vector<num::Tensor>* head_scores = nullptr);

// X1 = X + MHA(LN(X)); X2 = X1 + FF(LN(X1)).
num::Var temporal_block(num::Var x, const TemporalBlock<num::Var>& p, const ModelConfig& config,
                        const ForwardOptions& opts, std::vector<num::Tensor>* head_scores = nullptr);

// Mean over slices, layer norm, FC -> logits [1 x N].
num::Var classify_logits(num::Var x, const Head<num::Var>& p, const ModelConfig& config);

// Whole network for one trial Z [C_f x T] -> logits [1 x N].
num::Var forward_logits(num::Var z, const BoundParams& params, const ModelConfig& config, const ForwardOptions& opts);

// Whole network -> class probabilities [1 x N].
num::Var forward(num::Var z, const BoundParams& params, const ModelConfig& config, const ForwardOptions& opts);

// Eval-mode probabilities for one filtered trial.
std::vector<double> predict_proba(const ModelParams& params, const ModelConfig& config, const Eigen::MatrixXd& z,
                                  ForwardTrace* trace = nullptr);

}  // namespace s3t::model
