#include "s3t/error.hpp"
#include "s3t/numcore.hpp"

#include <cmath>

namespace s3t::num {

void adam_step(std::span<const ParamSlot> params, AdamState& state) {
  for (const ParamSlot& slot : params) {
    if (slot.grad == nullptr || slot.grad->empty()) {
      throw TrainingError("adam_step: no gradient for parameter '" + slot.name + "'");
    }
    if (slot.grad->shape() != slot.value->shape()) {
      throw TrainingError("adam_step: gradient shape " + to_string(slot.grad->shape()) +
                          " does not match parameter '" + slot.name + "' " + to_string(slot.value->shape()));
    }
  }

  const AdamConfig& cfg = state.config;
  const std::size_t step = ++state.step_count;
  const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));

  for (const ParamSlot& slot : params) {
    auto [it, inserted] = state.moments.try_emplace(slot.name);
    AdamState::Moments& mom = it->second;
    if (inserted) {
      mom.first = Tensor(slot.value->shape(), 0.0);
      mom.second = Tensor(slot.value->shape(), 0.0);
    }
    Tensor& w = *slot.value;
    const Tensor& g = *slot.grad;
    for (std::size_t i = 0; i < w.size(); ++i) {
      mom.first[i] = cfg.beta1 * mom.first[i] + (1.0 - cfg.beta1) * g[i];
      mom.second[i] = cfg.beta2 * mom.second[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = mom.first[i] / correction1;
      const double v_hat = mom.second[i] / correction2;
      w[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

}  // namespace s3t::num
