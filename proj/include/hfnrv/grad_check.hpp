#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hfnrv/tensor.hpp"

namespace hfnrv {

template <typename T>
using ScalarFn = std::function<Tensor<T>(const std::vector<Tensor<T>>&)>;

/// Compares reverse-mode gradients of `fn` against central differences.
///
/// For every input tensor the error is max_i |analytic_i - numeric_i| divided
/// by the larger of the two gradients' max-norms; the worst value over all
/// inputs is returned (0 when both gradients vanish).
template <typename T>
double grad_check(const ScalarFn<T>& fn, const std::vector<Tensor<T>>& inputs, double eps) {
  std::vector<Tensor<T>> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.emplace_back(t.shape(), t.data(), true);

  Tensor<T> out = fn(leaves);
  if (out.size() != 1) throw InvalidArgument("grad_check: function must return a scalar");
  out.backward();

  double worst = 0.0;
  NoGradGuard no_grad;
  for (auto& leaf : leaves) {
    const Vec<T> analytic = leaf.grad();
    Vec<T> numeric(leaf.size());
    Vec<T>& x = leaf.mutable_data();
    for (Index i = 0; i < x.size(); ++i) {
      const T orig = x[i];
      x[i] = orig + static_cast<T>(eps);
      const double fp = static_cast<double>(fn(leaves).item());
      x[i] = orig - static_cast<T>(eps);
      const double fm = static_cast<double>(fn(leaves).item());
      x[i] = orig;
      numeric[i] = static_cast<T>((fp - fm) / (2.0 * eps));
    }
    const double diff = static_cast<double>((analytic - numeric).abs().maxCoeff());
    const double scale = std::max(static_cast<double>(analytic.abs().maxCoeff()),
                                  static_cast<double>(numeric.abs().maxCoeff()));
    if (diff == 0.0) continue;
    worst = std::max(worst, diff / std::max(scale, 1e-300));
  }
  return worst;
}

}  // namespace hfnrv
