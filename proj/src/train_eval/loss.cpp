#include "s3t/error.hpp"
#include "s3t/train_eval.hpp"

#include <algorithm>
#include <cmath>

namespace s3t::train {

namespace {
constexpr double kLogFloor = 1e-12;
}

num::Var cross_entropy(num::Var probabilities, std::span<const int> labels) {
  const num::Tensor& p = probabilities.value();
  const std::size_t m = p.rows(), n = p.cols();
  if (labels.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(m) +
                         " rows");
  }
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= n) {
      throw DataError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(n) + ")");
    }
    total -= std::log(std::max(p.at(r, static_cast<std::size_t>(y)), kLogFloor));
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  std::vector<int> y(labels.begin(), labels.end());
  return probabilities.tape()->record(
      num::Tensor::scalar(total * inv_m), {probabilities},
      [probabilities, y = std::move(y), inv_m, n](num::Tape& tape, const num::Tensor& g) {
        const num::Tensor& p = probabilities.value();
        num::Tensor& dp = tape.grad_buffer(probabilities);
        for (std::size_t r = 0; r < y.size(); ++r) {
          const std::size_t idx = r * n + static_cast<std::size_t>(y[r]);
          if (p[idx] > kLogFloor) dp[idx] -= g[0] * inv_m / p[idx];
        }
      });
}

}  // namespace s3t::train
