#pragma once

#include <functional>
#include <string>
#include <vector>

#include "textsplat/diff/tensor.hpp"

namespace textsplat::diff {

struct GradCheckResult {
  double max_rel_error = 0.0;  // worst per-input norm-wise relative error
  std::string worst_input;
  std::size_t evaluations = 0;
};

// Compares reverse-mode gradients of a scalar loss against central finite
// differences for every coordinate of every input. `loss` must rebuild the
// graph from the current input values on each call. Relative error per input
// is |analytic - numeric|_2 / max(|analytic|_2, |numeric|_2, floor).
GradCheckResult gradcheck(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> inputs,
                          const std::vector<std::string>& names = {}, double h = 1e-5, double floor = 1e-10);

}  // namespace textsplat::diff
