#include "textsplat/diff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace textsplat::diff {

GradCheckResult gradcheck(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> inputs,
                          const std::vector<std::string>& names, double h, double floor) {
  for (auto& in : inputs) in.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs) {
    if (in.has_grad()) {
      analytic.emplace_back(in.grad().begin(), in.grad().end());
    } else {
      analytic.emplace_back(in.size(), 0.0);
    }
    in.zero_grad();
  }

  GradCheckResult res;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto vals = inputs[k].mutable_values();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = loss().item();
      vals[i] = orig - h;
      const double fm = loss().item();
      vals[i] = orig;
      res.evaluations += 2;
      const double num = (fp - fm) / (2.0 * h);
      const double an = analytic[k][i];
      diff2 += (an - num) * (an - num);
      a2 += an * an;
      n2 += num * num;
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), floor});
    if (rel >= res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_input = k < names.size() ? names[k] : "input" + std::to_string(k);
    }
  }
  return res;
}

}  // namespace textsplat::diff
