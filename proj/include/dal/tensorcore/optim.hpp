#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dal/tensorcore/nn.hpp"

namespace dal::tc {

/// One-cycle policy: cosine warm-up from `initial_lr` to `initial_lr * peak_factor`
/// over the first `up_fraction` of training, then cosine decay to
/// `initial_lr * final_factor`. Momentum runs the opposite way between
/// `momentum_hi` and `momentum_lo`.
struct OneCycleSchedule {
  double initial_lr = 2.0e-4;
  double peak_factor = 10.0;
  double final_factor = 1.0e-4;
  double up_fraction = 0.4;
  double momentum_lo = 0.85;
  double momentum_hi = 0.95;
  std::int64_t total_steps = 1;

  double lr(std::int64_t step) const;
  double momentum(std::int64_t step) const;
  std::int64_t up_steps() const;
  void validate() const;
};

struct AdamConfig {
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
  double grad_clip_norm = 35.0;  // <= 0 disables
};

/// Adam with decoupled weight decay whose first-moment coefficient and step
/// size follow a OneCycleSchedule. One uniform schedule applies to every
/// parameter.
template <class T>
class Adam {
 public:
  Adam(ParamStore<T>& store, OneCycleSchedule schedule, AdamConfig config = {});

  /// Applies one update using the gradients currently held by the store.
  /// Throws NumericError naming the parameter when a gradient is not finite.
  void step();

  std::int64_t step_count() const { return step_; }
  /// Restores the step counter and bias-correction state of a resumed run.
  void restore(std::int64_t step, double beta1_power, double beta2_power) {
    step_ = step;
    beta1_power_ = beta1_power;
    beta2_power_ = beta2_power;
  }
  double beta1_power() const { return beta1_power_; }
  double beta2_power() const { return beta2_power_; }
  double current_lr() const { return schedule_.lr(step_); }
  const OneCycleSchedule& schedule() const { return schedule_; }

  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }

 private:
  ParamStore<T>* store_;
  OneCycleSchedule schedule_;
  AdamConfig config_;
  std::int64_t step_ = 0;
  double beta1_power_ = 1.0, beta2_power_ = 1.0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace dal::tc
