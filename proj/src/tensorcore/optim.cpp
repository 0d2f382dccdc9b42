#include "dal/tensorcore/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dal/common/error.hpp"

namespace dal::tc {

namespace {
double annealing_cos(double start, double end, double factor) {
  return end + 0.5 * (start - end) * (std::cos(std::numbers::pi * factor) + 1.0);
}
}  // namespace

std::int64_t OneCycleSchedule::up_steps() const {
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(up_fraction * total_steps)));
}

void OneCycleSchedule::validate() const {
  if (!(initial_lr > 0) || !(peak_factor >= 1) || !(final_factor > 0) || !(up_fraction > 0 && up_fraction < 1) ||
      total_steps < 1 || !(momentum_lo > 0 && momentum_lo <= momentum_hi && momentum_hi < 1))
    throw ConfigError("invalid one-cycle schedule");
}

double OneCycleSchedule::lr(std::int64_t step) const {
  const std::int64_t up = up_steps();
  const double peak = initial_lr * peak_factor;
  if (step < up) return annealing_cos(initial_lr, peak, static_cast<double>(step) / up);
  const std::int64_t down = std::max<std::int64_t>(1, total_steps - up);
  const double f = std::min(1.0, static_cast<double>(step - up) / down);
  return annealing_cos(peak, initial_lr * final_factor, f);
}

double OneCycleSchedule::momentum(std::int64_t step) const {
  const std::int64_t up = up_steps();
  if (step < up) return annealing_cos(momentum_hi, momentum_lo, static_cast<double>(step) / up);
  const std::int64_t down = std::max<std::int64_t>(1, total_steps - up);
  const double f = std::min(1.0, static_cast<double>(step - up) / down);
  return annealing_cos(momentum_lo, momentum_hi, f);
}

template <class T>
Adam<T>::Adam(ParamStore<T>& store, OneCycleSchedule schedule, AdamConfig config)
    : store_(&store), schedule_(schedule), config_(config) {
  schedule_.validate();
  for (const auto& [name, p] : store.params()) {
    m_.emplace_back(p.numel(), T(0));
    v_.emplace_back(p.numel(), T(0));
  }
}

template <class T>
void Adam<T>::step() {
  auto& params = store_->params();
  double sq = 0;
  for (const auto& [name, p] : params) {
    for (T g : p.grad()) {
      if (!std::isfinite(static_cast<double>(g)))
        throw NumericError("non-finite gradient in parameter '" + name + "' at step " + std::to_string(step_));
      sq += static_cast<double>(g) * g;
    }
  }
  double clip = 1.0;
  const double norm = std::sqrt(sq);
  if (config_.grad_clip_norm > 0 && norm > config_.grad_clip_norm) clip = config_.grad_clip_norm / (norm + 1e-6);

  const double lr = schedule_.lr(step_);
  const double beta1 = schedule_.momentum(step_);
  beta1_power_ *= beta1;
  beta2_power_ *= config_.beta2;
  const double c1 = 1.0 - beta1_power_, c2 = 1.0 - beta2_power_;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].second;
    auto grad = p.grad();
    auto data = p.data_mut();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i] * clip;
      m[i] = static_cast<T>(beta1 * m[i] + (1 - beta1) * g);
      v[i] = static_cast<T>(config_.beta2 * v[i] + (1 - config_.beta2) * g * g);
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
      data[i] = static_cast<T>(data[i] - lr * (update + config_.weight_decay * data[i]));
    }
  }
  ++step_;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace dal::tc
