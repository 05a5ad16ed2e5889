#include "hfnrv/fft.hpp"

#include <cmath>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace hfnrv {

namespace {

template <typename T>
ComplexGrid<T> transform(const ComplexGrid<T>& x, bool inverse) {
  const Eigen::Index H = x.rows(), W = x.cols();
  ComplexGrid<T> out(H, W);
  if (H == 0 || W == 0) return out;
  Eigen::FFT<T> fft;
  fft.SetFlag(Eigen::FFT<T>::Unscaled);
  std::vector<std::complex<T>> in_buf, out_buf;

  // kissfft does not handle length 1; that transform is the identity.
  auto run = [&](std::vector<std::complex<T>>& dst, const std::vector<std::complex<T>>& src) {
    if (src.size() == 1)
      dst = src;
    else if (inverse)
      fft.inv(dst, src);
    else
      fft.fwd(dst, src);
  };

  in_buf.resize(static_cast<std::size_t>(W));
  for (Eigen::Index i = 0; i < H; ++i) {
    for (Eigen::Index j = 0; j < W; ++j) in_buf[static_cast<std::size_t>(j)] = x(i, j);
    run(out_buf, in_buf);
    for (Eigen::Index j = 0; j < W; ++j) out(i, j) = out_buf[static_cast<std::size_t>(j)];
  }
  in_buf.resize(static_cast<std::size_t>(H));
  for (Eigen::Index j = 0; j < W; ++j) {
    for (Eigen::Index i = 0; i < H; ++i) in_buf[static_cast<std::size_t>(i)] = out(i, j);
    run(out_buf, in_buf);
    for (Eigen::Index i = 0; i < H; ++i) out(i, j) = out_buf[static_cast<std::size_t>(i)];
  }
  out *= static_cast<T>(1.0 / std::sqrt(static_cast<double>(H * W)));
  return out;
}

}  // namespace

template <typename T>
ComplexGrid<T> fft2d(const ComplexGrid<T>& x) {
  return transform(x, false);
}

template <typename T>
ComplexGrid<T> ifft2d(const ComplexGrid<T>& x) {
  return transform(x, true);
}

template ComplexGrid<float> fft2d(const ComplexGrid<float>&);
template ComplexGrid<double> fft2d(const ComplexGrid<double>&);
template ComplexGrid<float> ifft2d(const ComplexGrid<float>&);
template ComplexGrid<double> ifft2d(const ComplexGrid<double>&);

}  // namespace hfnrv
