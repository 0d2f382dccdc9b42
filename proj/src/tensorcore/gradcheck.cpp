#include "dal/tensorcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dal/common/rng.hpp"
#include "dal/tensorcore/ops.hpp"

namespace dal::tc {

namespace {

Tensord reduce(const Tensord& out) {
  if (out.numel() == 1) return out.ndim() == 0 ? out : out.reshape({});
  Rng rng(0xC0FFEE);
  std::vector<double> w(out.numel());
  for (auto& v : w) v = rng.uniform(0.5, 1.5) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  return sum(mul(out, Tensord::from_data(out.shape(), std::move(w))));
}

double evaluate(const std::function<Tensord(const std::vector<Tensord>&)>& fn, const std::vector<Tensord>& inputs) {
  NoGradGuard guard;
  return reduce(fn(inputs)).item();
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensord(const std::vector<Tensord>&)>& fn,
                           std::vector<Tensord> inputs, double step, double floor) {
  for (auto& in : inputs) in.zero_grad();
  backward(reduce(fn(inputs)));

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& in = inputs[k];
    if (!in.requires_grad()) continue;
    std::vector<double> analytic(in.numel(), 0.0);
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());
    auto data = in.data_mut();
    for (std::int64_t i = 0; i < in.numel(); ++i) {
      const double orig = data[i];
      data[i] = orig + step;
      const double up = evaluate(fn, inputs);
      data[i] = orig - step;
      const double down = evaluate(fn, inputs);
      data[i] = orig;
      const double numeric = (up - down) / (2 * step);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double rel = abs_err / std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      ++report.checked;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input = static_cast<int>(k);
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace dal::tc
