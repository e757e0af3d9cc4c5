#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fuss {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for one flat parameter vector.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t size, AdamConfig config);

  const AdamConfig& config() const { return config_; }
  std::uint64_t step() const { return step_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }
  std::size_t size() const { return m_.size(); }

  friend void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

/// Bias-corrected Adam update in place; increments the step count.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

}  // namespace fuss
