#pragma once

#include "s3t/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace s3t::testing {

inline num::Tensor random_tensor(num::Shape shape, num::Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  num::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = normal(rng);
  return t;
}

// Relative error with a floor so that two tiny values compare on an
// absolute scale instead of blowing up. Central differences with a 1e-5 step
// carry roundoff near 1e-11 * |loss|, so the floor sits well above that.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

using LossBuilder = std::function<num::Var(num::Tape&, const std::vector<num::Var>&)>;

// Compares tape gradients of a scalar loss against central differences.
// When `per_input` is nonzero only that many random coordinates of each
// input are probed. Returns the worst relative error.
inline double gradient_check(const LossBuilder& build, std::vector<num::Tensor> inputs, double step = 1e-5,
                             std::size_t per_input = 0, std::uint64_t seed = 3) {
  std::vector<num::Tensor> analytic;
  {
    num::Tape tape;
    std::vector<num::Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.parameter(t));
    tape.backward(build(tape, vars));
    for (const auto& v : vars) analytic.push_back(v.grad());
  }
  auto eval = [&]() {
    num::Tape tape;
    std::vector<num::Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.constant(t));
    return build(tape, vars).value()[0];
  };
  num::Rng rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<std::size_t> coords(inputs[i].size());
    for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
    if (per_input && per_input < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(per_input);
    }
    for (auto k : coords) {
      const double saved = inputs[i][k];
      inputs[i][k] = saved + step;
      const double up = eval();
      inputs[i][k] = saved - step;
      const double down = eval();
      inputs[i][k] = saved;
      worst = std::max(worst, rel_error(analytic[i][k], (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

// Weighted sum with fixed random weights so every output element carries a
// distinct gradient.
inline num::Var probe(num::Tape& tape, num::Var x, std::uint64_t seed = 11) {
  num::Rng rng(seed);
  return num::sum(num::mul(x, tape.constant(random_tensor(x.shape(), rng))));
}

}  // namespace s3t::testing
