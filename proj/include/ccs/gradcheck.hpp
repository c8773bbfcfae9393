#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ccs/errors.hpp"
#include "ccs/nn.hpp"
#include "ccs/tensor.hpp"

namespace ccs {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Default perturbation scale: 1e-3 suits f32 round-off; f64 affords 1e-5.
template <typename T>
constexpr double default_grad_check_eps() {
  return sizeof(T) >= 8 ? 1e-5 : 1e-3;
}

/// Gradient magnitude below which central differences are dominated by
/// round-off; used as the floor of the relative-error denominator.
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares reverse-mode gradients against central differences. Each element
/// x is perturbed by eps*max(1,|x|); the error of an element is
/// |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
template <typename T, typename Fn>
GradCheckResult grad_check(Fn&& scalar_fn, std::vector<NamedParameter<T>>& params,
                           double eps = default_grad_check_eps<T>()) {
  for (auto& p : params) p.tensor.zero_grad();
  {
    Tensor<T> out = scalar_fn();
    if (out.size() != 1) {
      throw UsageError("grad_check needs a scalar function, got shape " + shape_str(out.shape()));
    }
    out.backward();
  }
  GradCheckResult res;
  NoGradGuard no_grad;
  for (auto& p : params) {
    const std::vector<T> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    auto w = p.tensor.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T orig = w[i];
      const double h = eps * std::max(1.0, std::abs(static_cast<double>(orig)));
      const T plus = static_cast<T>(orig + h);
      const T minus = static_cast<T>(orig - h);
      w[i] = plus;
      const double fp = scalar_fn().item();
      w[i] = minus;
      const double fm = scalar_fn().item();
      w[i] = orig;
      // Divide by the representable step, not the requested one.
      const double num = (fp - fm) / (static_cast<double>(plus) - static_cast<double>(minus));
      const double ana = analytic[i];
      const double rel =
          std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), kGradCheckFloor});
      if (res.checked++ == 0 || rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_parameter = p.name;
        res.worst_index = i;
        res.analytic = ana;
        res.numeric = num;
      }
    }
  }
  return res;
}

/// Convenience overload over a whole ParameterSet.
template <typename T, typename Fn>
GradCheckResult grad_check(Fn&& scalar_fn, ParameterSet<T>& params,
                           double eps = default_grad_check_eps<T>()) {
  return grad_check<T>(std::forward<Fn>(scalar_fn), params.items(), eps);
}

}  // namespace ccs
