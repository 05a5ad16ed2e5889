#pragma once

#include <vector>

#include "hfnrv/tensor.hpp"

namespace hfnrv {

// Convolution and resampling. Feature maps are C×H×W.

/// Zero-padded 2-D cross-correlation. `weight` is O×(C/groups)×k×k; only
/// groups == 1 and depthwise (groups == C == O) are supported. `bias` may be
/// an undefined tensor.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Index stride = 1, Index padding = 0, Index groups = 1);

/// r²C×H×W → C×rH×rW with out(c, r·y+dy, r·x+dx) = in(c·r² + dy·r + dx, y, x).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, Index r);

/// Bilinear resize with half-pixel centres (align_corners = false).
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, Index out_h, Index out_w);

/// Pads odd spatial dims to even by repeating the last row/column.
template <typename T>
Tensor<T> replicate_pad_to_even(const Tensor<T>& input);

// Activations.

/// ω1·sin(x) + ω2·cos(x) with scalar (shape {1}) learnable ω1, ω2.
template <typename T>
Tensor<T> harmonic(const Tensor<T>& x, const Tensor<T>& omega1, const Tensor<T>& omega2);

/// tanh approximation.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

template <typename T>
Tensor<T> sin(const Tensor<T>& x);

template <typename T>
Tensor<T> abs(const Tensor<T>& x);

template <typename T>
Tensor<T> square(const Tensor<T>& x);

// Elementwise arithmetic. Operands have equal rank; each axis either matches
// or is 1 on one side (broadcast).

template <typename T>
Tensor<T> add(const Tensor<T>& x, const Tensor<T>& y);
template <typename T>
Tensor<T> sub(const Tensor<T>& x, const Tensor<T>& y);
template <typename T>
Tensor<T> mul(const Tensor<T>& x, const Tensor<T>& y);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset);

template <typename T>
Tensor<T> operator+(const Tensor<T>& x, const Tensor<T>& y) { return add(x, y); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& x, const Tensor<T>& y) { return sub(x, y); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& x, const Tensor<T>& y) { return mul(x, y); }

// Reductions to a {1} tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// Structure.

/// Concatenate along axis 0; all other axes must match.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts);

/// Rows [begin, begin+count) of axis 0.
template <typename T>
Tensor<T> slice0(const Tensor<T>& x, Index begin, Index count);

/// x[index] along axis 0, dropping that axis.
template <typename T>
Tensor<T> select0(const Tensor<T>& x, Index index);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Stacks equal-shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts);

// Dense linear algebra on rank-2 tensors.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);
/// Softmax over the last axis of a rank-2 tensor.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a);

inline constexpr double kLayerNormEps = 1e-6;

/// Normalises over the channel axis independently at every spatial location,
/// then applies per-channel scale (gamma) and shift (beta).
template <typename T>
Tensor<T> layer_norm_channels(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              double eps = kLayerNormEps);

}  // namespace hfnrv
