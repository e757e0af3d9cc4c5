#include "fuss/adam.hpp"

#include <cmath>

#include <fmt/core.h>

#include "fuss/errors.hpp"

namespace fuss {

AdamState::AdamState(std::size_t size, AdamConfig config) : config_(config), m_(size, 0.0), v_(size, 0.0) {}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m_.size()) {
    throw ConfigError(fmt::format("adam step over {} params with {} grads and {} moments", params.size(),
                                  grads.size(), state.m_.size()));
  }
  const auto& cfg = state.config_;
  ++state.step_;
  const double t = static_cast<double>(state.step_);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m_[i] = cfg.beta1 * state.m_[i] + (1.0 - cfg.beta1) * g;
    state.v_[i] = cfg.beta2 * state.v_[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m_[i] / correction1;
    const double v_hat = state.v_[i] / correction2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

}  // namespace fuss
