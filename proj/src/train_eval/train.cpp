#include "s3t/error.hpp"
#include "s3t/train_eval.hpp"

#include <cmath>
#include <numeric>

namespace s3t::train {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (learning_rate < 0.0) throw ConfigError("learning rate must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("Adam betas must lie in [0, 1)");
}

TrainResult train(std::span<const prep::Trial> trials, const model::ModelConfig& config, const TrainConfig& tc,
                  const EpochCallback& on_epoch) {
  return train(trials, config, tc, model::init_params(config, tc.seed), on_epoch);
}

TrainResult train(std::span<const prep::Trial> trials, const model::ModelConfig& config, const TrainConfig& tc,
                  model::ModelParams initial, const EpochCallback& on_epoch) {
  tc.validate();
  config.validate();
  if (trials.empty()) throw TrainingError("training set is empty");

  std::vector<num::Tensor> inputs;
  std::vector<int> labels;
  inputs.reserve(trials.size());
  for (const auto& t : trials) {
    if (t.label < 0 || static_cast<std::size_t>(t.label) >= config.n_classes) {
      throw DataError("training label " + std::to_string(t.label) + " outside [0, " +
                      std::to_string(config.n_classes) + ")");
    }
    inputs.push_back(model::to_tensor(t.data));
    labels.push_back(t.label);
  }

  TrainResult result{std::move(initial), {}};
  num::AdamState adam;
  adam.config = {tc.learning_rate, tc.beta1, tc.beta2, tc.epsilon};

  // One stream drives both shuffling and dropout masks.
  num::Rng rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(trials.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tc.batch_size);
      num::Tape tape;
      const model::BoundParams bound = model::bind(tape, result.params, true);
      model::ForwardOptions opts;
      opts.training = tc.dropout;
      opts.rng = &rng;

      std::vector<num::Var> logits;
      std::vector<int> batch_labels;
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t idx = order[k];
        logits.push_back(model::forward_logits(tape.constant(inputs[idx]), bound, config, opts));
        batch_labels.push_back(labels[idx]);
      }
      const num::Var probs = num::softmax_rows(num::concat_rows(logits));
      const num::Var loss = cross_entropy(probs, batch_labels);
      if (!std::isfinite(loss.value()[0])) {
        throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
      num::adam_step(model::param_slots(result.params, bound), adam);
      loss_sum += loss.value()[0] * static_cast<double>(stop - start);
    }
    const double mean_loss = loss_sum / static_cast<double>(order.size());
    result.loss_curve.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return result;
}

}  // namespace s3t::train
