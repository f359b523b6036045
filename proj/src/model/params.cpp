#include "s3t/error.hpp"
#include "s3t/model.hpp"

#include <cmath>

namespace s3t::model {

namespace {

using num::Tensor;

struct Initializer {
  num::Rng rng;
  bool zero = false;

  double uniform(double bound) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return (2.0 * u - 1.0) * bound;
  }

  Linear<Tensor> linear(std::size_t in, std::size_t out) {
    Linear<Tensor> l{Tensor({in, out}), Tensor({out})};
    if (!zero) {
      const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
      for (auto& w : l.weight.values()) w = uniform(bound);
    }
    return l;
  }

  static Norm<Tensor> norm(std::size_t d) { return {Tensor({d}, 1.0), Tensor({d})}; }
};

ModelParams build(const ModelConfig& config, Initializer init) {
  config.validate();
  const std::size_t cf = config.n_feature_channels;
  const std::size_t d = config.slice_d;
  const std::size_t dk = config.key_width();
  const std::size_t dv = config.value_width();

  ModelParams p;
  if (config.modules.spatial) {
    auto query = init.linear(cf, cf);
    auto key = init.linear(cf, cf);
    auto value = init.linear(cf, cf);
    p.spatial = SpatialAttention<Tensor>{std::move(query), std::move(key), std::move(value)};
  }
  if (config.modules.posenc) {
    PositionEncoding<Tensor> pe{Tensor({cf, config.kernel_size}), Tensor({cf})};
    if (!init.zero) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(config.kernel_size));
      for (auto& w : pe.kernel.values()) w = init.uniform(bound);
    }
    p.posenc = std::move(pe);
  }
  if (config.modules.temporal) {
    for (std::size_t b = 0; b < config.n_blocks; ++b) {
      TemporalBlock<Tensor> blk;
      blk.norm = Initializer::norm(d);
      blk.query = init.linear(d, dk);
      blk.key = init.linear(d, dk);
      blk.value = init.linear(d, dv);
      blk.out = init.linear(dv, d);
      if (config.modules.ff) {
        FeedForward<Tensor> ff;
        ff.norm = Initializer::norm(d);
        ff.expand = init.linear(d, config.ff_expansion * d);
        ff.project = init.linear(config.ff_expansion * d, d);
        blk.ff = std::move(ff);
      }
      p.blocks.push_back(std::move(blk));
    }
  }
  p.head.norm = Initializer::norm(d);
  p.head.fc = init.linear(d, config.n_classes);
  return p;
}

}  // namespace

std::size_t count_params(const ModelParams& params) {
  std::size_t total = 0;
  visit_params(params, [&](const std::string&, const Tensor& t) { total += t.size(); });
  return total;
}

std::size_t count_params(const ModelConfig& config) { return count_params(zero_params(config)); }

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  return build(config, Initializer{num::Rng(seed), false});
}

ModelParams zero_params(const ModelConfig& config) { return build(config, Initializer{num::Rng(0), true}); }

BoundParams bind(num::Tape& tape, const ModelParams& params, bool trainable) {
  return map_params<num::Var>(params, [&](const std::string&, const Tensor& t) {
    return trainable ? tape.parameter(t) : tape.constant(t);
  });
}

std::vector<num::ParamSlot> param_slots(ModelParams& params, const BoundParams& bound) {
  std::vector<num::ParamSlot> slots;
  visit_params(params, [&](const std::string& name, Tensor& t) { slots.push_back({name, &t, nullptr}); });
  std::size_t i = 0;
  visit_params(bound, [&](const std::string& name, const num::Var& v) {
    if (i >= slots.size() || slots[i].name != name) throw UsageError("bound parameters do not match model layout");
    slots[i++].grad = &v.grad();
  });
  if (i != slots.size()) throw UsageError("bound parameters do not match model layout");
  return slots;
}

}  // namespace s3t::model
