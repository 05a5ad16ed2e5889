#pragma once

// Single-level orthonormal Haar analysis/synthesis on C×H×W feature maps and
// the wavelet frequency decomposer built on it.
//
// With L = [1, 1]/√2 and H = [-1, 1]/√2 the four 2×2 kernels are the outer
// products K_ab[i][j] = a[i]·b[j] (i = row, j = column). For a block
// [[p, q], [r, s]]:
//   ll = ( p + q + r + s)/2      lh = (-p + q - r + s)/2
//   hl = (-p - q + r + s)/2      hh = ( p - q - r + s)/2

#include <optional>

#include "hfnrv/tensor.hpp"

namespace hfnrv {

template <typename T>
struct SubbandSet {
  Tensor<T> ll, lh, hl, hh;
};

/// Rejects odd H/W unless `pad_odd` is set, in which case the last
/// row/column is replicated first.
template <typename T>
SubbandSet<T> haar_dwt2d(const Tensor<T>& input, bool pad_odd = false);

template <typename T>
Tensor<T> haar_idwt2d(const SubbandSet<T>& bands);

/// 1×1 conv weights for one WFD block. `low` is absent for the last block
/// of a chain, whose low-frequency output has no consumer.
template <typename T>
struct WfdParams {
  Tensor<T> high_weight, high_bias;
  std::optional<Tensor<T>> low_weight, low_bias;
};

template <typename T>
struct WfdOutput {
  Tensor<T> low;       ///< F_L, undefined when params carry no low conv
  Tensor<T> high;      ///< F_H
  Tensor<T> high_raw;  ///< lh + hl + hh before the 1×1 conv
};

template <typename T>
WfdOutput<T> wfd(const Tensor<T>& input, const WfdParams<T>& params, bool pad_odd = false);

}  // namespace hfnrv
