#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dal/tensorcore/tensor.hpp"

namespace dal::tc {

struct GradCheckReport {
  double max_rel_error = 0;
  double max_abs_error = 0;
  int worst_input = -1;
  std::int64_t worst_index = -1;
  std::int64_t checked = 0;
  bool passed(double tolerance) const { return max_rel_error <= tolerance; }
};

/// Compares reverse-mode gradients of `fn` against central differences for
/// every input that requires a gradient. Non-scalar outputs are reduced with
/// fixed pseudo-random weights. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const std::function<Tensord(const std::vector<Tensord>&)>& fn,
                           std::vector<Tensord> inputs, double step = 1e-6, double floor = 1e-5);

}  // namespace dal::tc
