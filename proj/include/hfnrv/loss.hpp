#pragma once

#include <string>

#include "hfnrv/tensor.hpp"

namespace hfnrv {

enum class LossVariant { Full, SpaOnly, L2Only, NoLog };

std::string to_string(LossVariant v);
LossVariant loss_variant_from_string(const std::string& s);

struct LossConfig {
  double alpha = 0.7;
  double mu = 100.0;
  LossVariant variant = LossVariant::Full;

  bool operator==(const LossConfig&) const = default;
};

void validate(const LossConfig& cfg);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Normalised 1-D Gaussian of length min(11, n); the window shrinks for
/// dimensions smaller than 11 so tiny images still have one valid position.
std::vector<double> ssim_window(Index n);

/// Mean SSIM over channels and valid window positions of two C×H×W images.
/// Differentiable in both arguments.
template <typename T>
Tensor<T> ssim(const Tensor<T>& x, const Tensor<T>& y);

/// α·mean|x̂−x| + (1−α)·(1−ssim(x̂, x)).
template <typename T>
Tensor<T> spatial_loss(const Tensor<T>& x_hat, const Tensor<T>& x, double alpha);

/// Per-channel per-bin |FFT(x̂) − FFT(x)| (C×H×W, no gradient).
template <typename T>
Tensor<T> spectral_difference(const Tensor<T>& x_hat, const Tensor<T>& x);

/// ln(1 + |FFT(x̂) − FFT(x)|), C×H×W, no gradient.
template <typename T>
Tensor<T> spectral_weight(const Tensor<T>& x_hat, const Tensor<T>& x);

/// mean(W·|FFT(x̂) − FFT(x)|) with W treated as a constant. W defaults to the
/// log weight of the current pair (or |ΔFFT| itself when `no_log`); pass
/// `fixed_weight` to hold it at a given map instead.
template <typename T>
Tensor<T> frequency_loss(const Tensor<T>& x_hat, const Tensor<T>& x, bool no_log = false,
                         const Tensor<T>* fixed_weight = nullptr);

template <typename T>
struct LossReport {
  double l_spa = 0;    ///< spatial loss of the pair
  double l_fre = 0;    ///< frequency loss of the pair (log or linear weight per variant)
  double l_total = 0;  ///< value of `objective`
  Tensor<T> objective; ///< differentiable training objective
};

/// full: L_spa + μ·L_fre; spa_only: L_spa; l2_only: MSE; no_log: L_spa +
/// μ·L_fre with W = |ΔFFT|. l_spa and l_fre are always reported; they carry
/// gradient only when part of the objective.
template <typename T>
LossReport<T> total_loss(const Tensor<T>& x_hat, const Tensor<T>& x, const LossConfig& cfg,
                         const Tensor<T>* fixed_weight = nullptr);

}  // namespace hfnrv
