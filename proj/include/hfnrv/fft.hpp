#pragma once

// Orthonormal 2-D DFT of arbitrary size, backed by Eigen's FFT module
// (kissfft, mixed radix). Both directions are scaled by 1/√(HW), so the
// transform is unitary and Parseval holds exactly up to rounding.

#include <complex>

#include <Eigen/Core>

namespace hfnrv {

template <typename T>
using ComplexGrid = Eigen::Matrix<std::complex<T>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RealGrid = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
ComplexGrid<T> fft2d(const ComplexGrid<T>& x);

template <typename T>
ComplexGrid<T> ifft2d(const ComplexGrid<T>& x);

template <typename T>
ComplexGrid<T> fft2d(const RealGrid<T>& x) {
  return fft2d<T>(ComplexGrid<T>(x.template cast<std::complex<T>>()));
}

/// Moves the DC bin to (H/2, W/2).
template <typename T>
RealGrid<T> fftshift(const RealGrid<T>& x) {
  const Eigen::Index H = x.rows(), W = x.cols();
  RealGrid<T> out(H, W);
  for (Eigen::Index i = 0; i < H; ++i)
    for (Eigen::Index j = 0; j < W; ++j) out((i + H / 2) % H, (j + W / 2) % W) = x(i, j);
  return out;
}

}  // namespace hfnrv
