#pragma once

// Shared helpers for the test binaries.

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>

#include "hfnrv/tensor.hpp"

namespace hfnrv::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Vec<T> v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<T>(u(rng));
  return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  return static_cast<double>((a.data() - b.data()).abs().maxCoeff());
}

inline constexpr int kSeeds = 10;
inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTol = 1e-4;

}  // namespace hfnrv::testing

namespace hfnrv::testing {

/// Central-difference check of d fn / d params. The parameter list is
/// treated as one vector: max |analytic − numeric| over the larger max-norm
/// of the two full gradients, as grad_check does per input tensor.
inline double param_grad_check(ParameterList<double>& params, const std::function<Tensor<double>()>& fn,
                               double eps = kFdStep) {
  for (auto& p : params) p.tensor.zero_grad();
  fn().backward();
  double diff = 0, scale = 0;
  NoGradGuard guard;
  for (auto& p : params) {
    const Vec<double> analytic = p.tensor.grad();
    Vec<double>& x = p.tensor.mutable_data();
    for (Index i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + eps;
      const double fp = fn().item();
      x[i] = orig - eps;
      const double fm = fn().item();
      x[i] = orig;
      const double numeric = (fp - fm) / (2 * eps);
      diff = std::max(diff, std::abs(analytic[i] - numeric));
      scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric)});
    }
  }
  return diff == 0 ? 0.0 : diff / scale;
}

/// Randomly re-draws every parameter (zero-initialised layers included) so
/// no path is gated off.
inline void randomize(ParameterList<double>& params, std::uint64_t seed, double amp = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  for (auto& p : params)
    for (Index i = 0; i < p.tensor.size(); ++i) p.tensor.mutable_data()[i] = u(rng);
}

}  // namespace hfnrv::testing
