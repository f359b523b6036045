#include "s3t/error.hpp"
#include "s3t/preprocess.hpp"

namespace s3t::prep {

StandardizationStats fit_standardization(std::span<const Trial> trials, std::string source) {
  if (trials.size() < 2) {
    throw DataError("standardization needs at least 2 training trials, got " + std::to_string(trials.size()));
  }
  const Eigen::Index channels = trials.front().channels();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(channels);
  double count = 0.0;
  for (const Trial& t : trials) {
    if (t.channels() != channels) throw DimensionError("training trials disagree on channel count");
    sum += t.data.rowwise().sum();
    count += static_cast<double>(t.samples());
  }
  const Eigen::VectorXd mean = sum / count;

  // Second pass around the pooled mean for accuracy.
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(channels);
  for (const Trial& t : trials) {
    sq += (t.data.colwise() - mean).array().square().rowwise().sum().matrix();
  }
  const Eigen::VectorXd variance = sq / count;
  for (Eigen::Index c = 0; c < channels; ++c) {
    if (!(variance(c) > 0.0)) {
      throw DataError("channel " + std::to_string(c) + " is flat in the training data (zero variance)");
    }
  }
  return {mean, variance, std::move(source)};
}

Trial standardize(const Trial& trial, const StandardizationStats& stats) {
  if (trial.channels() != stats.mean.size()) {
    throw DimensionError("trial has " + std::to_string(trial.channels()) + " channels but stats cover " +
                         std::to_string(stats.mean.size()));
  }
  Trial out = trial;
  const Eigen::VectorXd inv_std = stats.variance.array().sqrt().inverse();
  out.data = ((trial.data.colwise() - stats.mean).array().colwise() * inv_std.array()).matrix();
  return out;
}

std::vector<Trial> standardize(std::span<const Trial> trials, const StandardizationStats& stats) {
  std::vector<Trial> out;
  out.reserve(trials.size());
  for (const Trial& t : trials) out.push_back(standardize(t, stats));
  return out;
}

Trial destandardize(const Trial& trial, const StandardizationStats& stats) {
  if (trial.channels() != stats.mean.size()) throw DimensionError("channel count mismatch in destandardize");
  Trial out = trial;
  const Eigen::VectorXd std_dev = stats.variance.array().sqrt();
  out.data = ((trial.data.array().colwise() * std_dev.array()).matrix().colwise() + stats.mean);
  return out;
}

}  // namespace s3t::prep
