#include "hfnrv/wavelet.hpp"

#include <array>

#include "hfnrv/ops.hpp"

namespace hfnrv {

namespace {

using Signs = std::array<int, 4>;  // weights of p, q, r, s in units of 1/2

constexpr Signs kLL{1, 1, 1, 1};
constexpr Signs kLH{-1, 1, -1, 1};
constexpr Signs kHL{-1, -1, 1, 1};
constexpr Signs kHH{1, -1, -1, 1};

template <typename T>
Tensor<T> haar_band(const Tensor<T>& x, const Signs& sg, const char* name) {
  const Index C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const Index h = H / 2, w = W / 2;
  const T k[4] = {T(0.5) * sg[0], T(0.5) * sg[1], T(0.5) * sg[2], T(0.5) * sg[3]};
  Vec<T> out(C * h * w);
  const T* in = x.data().data();
  for (Index c = 0; c < C; ++c)
    for (Index y = 0; y < h; ++y)
      for (Index i = 0; i < w; ++i) {
        const T* row0 = in + (c * H + 2 * y) * W + 2 * i;
        const T* row1 = row0 + W;
        out[(c * h + y) * w + i] = k[0] * row0[0] + k[1] * row0[1] + k[2] * row1[0] + k[3] * row1[1];
      }
  auto xn = x.node();
  return detail::make_result<T>(name, {C, h, w}, std::move(out), {&x},
                                [=](detail::Node<T>& self) {
                                  T* dx = xn->grad_buffer().data();
                                  for (Index c = 0; c < C; ++c)
                                    for (Index y = 0; y < h; ++y)
                                      for (Index i = 0; i < w; ++i) {
                                        const T g = self.grad[(c * h + y) * w + i];
                                        T* row0 = dx + (c * H + 2 * y) * W + 2 * i;
                                        T* row1 = row0 + W;
                                        row0[0] += k[0] * g;
                                        row0[1] += k[1] * g;
                                        row1[0] += k[2] * g;
                                        row1[1] += k[3] * g;
                                      }
                                });
}

}  // namespace

template <typename T>
SubbandSet<T> haar_dwt2d(const Tensor<T>& input, bool pad_odd) {
  if (input.rank() != 3)
    throw InvalidArgument("haar_dwt2d: expected C×H×W input, got " + shape_str(input.shape()));
  Tensor<T> x = input;
  if (x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
    if (!pad_odd)
      throw InvalidArgument("haar_dwt2d: spatial dims must be even, got " +
                            shape_str(input.shape()));
    x = replicate_pad_to_even(x);
  }
  return {haar_band(x, kLL, "haar_ll"), haar_band(x, kLH, "haar_lh"), haar_band(x, kHL, "haar_hl"),
          haar_band(x, kHH, "haar_hh")};
}

template <typename T>
Tensor<T> haar_idwt2d(const SubbandSet<T>& b) {
  const Shape& s = b.ll.shape();
  if (s.size() != 3 || b.lh.shape() != s || b.hl.shape() != s || b.hh.shape() != s)
    throw InvalidArgument("haar_idwt2d: subband shapes differ");
  const Index C = s[0], h = s[1], w = s[2];
  const Index H = 2 * h, W = 2 * w;
  // Synthesis is the transpose of analysis: pixel (a, b) of the block gets
  // sum over bands of band_value * kernel[a][b].
  const std::array<const Signs*, 4> kernels{&kLL, &kLH, &kHL, &kHH};
  const std::array<const Tensor<T>*, 4> bands{&b.ll, &b.lh, &b.hl, &b.hh};
  Vec<T> out = Vec<T>::Zero(C * H * W);
  for (std::size_t k = 0; k < 4; ++k) {
    const T* v = bands[k]->data().data();
    const Signs& sg = *kernels[k];
    for (Index c = 0; c < C; ++c)
      for (Index y = 0; y < h; ++y)
        for (Index i = 0; i < w; ++i) {
          const T g = T(0.5) * v[(c * h + y) * w + i];
          T* row0 = out.data() + (c * H + 2 * y) * W + 2 * i;
          T* row1 = row0 + W;
          row0[0] += sg[0] * g;
          row0[1] += sg[1] * g;
          row1[0] += sg[2] * g;
          row1[1] += sg[3] * g;
        }
  }
  std::array<std::shared_ptr<detail::Node<T>>, 4> nodes{b.ll.node(), b.lh.node(), b.hl.node(),
                                                        b.hh.node()};
  return detail::make_result<T>(
      "haar_idwt2d", {C, H, W}, std::move(out), {&b.ll, &b.lh, &b.hl, &b.hh},
      [=](detail::Node<T>& self) {
        for (std::size_t k = 0; k < 4; ++k) {
          if (!nodes[k]->requires_grad) continue;
          const Signs& sg = *kernels[k];
          T* d = nodes[k]->grad_buffer().data();
          for (Index c = 0; c < C; ++c)
            for (Index y = 0; y < h; ++y)
              for (Index i = 0; i < w; ++i) {
                const T* row0 = self.grad.data() + (c * H + 2 * y) * W + 2 * i;
                const T* row1 = row0 + W;
                d[(c * h + y) * w + i] +=
                    T(0.5) * (sg[0] * row0[0] + sg[1] * row0[1] + sg[2] * row1[0] + sg[3] * row1[1]);
              }
        }
      });
}

template <typename T>
WfdOutput<T> wfd(const Tensor<T>& input, const WfdParams<T>& params, bool pad_odd) {
  SubbandSet<T> bands = haar_dwt2d(input, pad_odd);
  WfdOutput<T> out;
  out.high_raw = add(add(bands.lh, bands.hl), bands.hh);
  out.high = conv2d(out.high_raw, params.high_weight, params.high_bias);
  if (params.low_weight)
    out.low = conv2d(bands.ll, *params.low_weight,
                     params.low_bias ? *params.low_bias : Tensor<T>());
  return out;
}

template SubbandSet<float> haar_dwt2d(const Tensor<float>&, bool);
template SubbandSet<double> haar_dwt2d(const Tensor<double>&, bool);
template Tensor<float> haar_idwt2d(const SubbandSet<float>&);
template Tensor<double> haar_idwt2d(const SubbandSet<double>&);
template WfdOutput<float> wfd(const Tensor<float>&, const WfdParams<float>&, bool);
template WfdOutput<double> wfd(const Tensor<double>&, const WfdParams<double>&, bool);

}  // namespace hfnrv
