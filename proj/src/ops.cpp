#include "hfnrv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hfnrv {

namespace {

using detail::make_result;
using detail::Node;

template <typename T>
using MapM = Eigen::Map<RowMatrix<T>>;
template <typename T>
using CMapM = Eigen::Map<const RowMatrix<T>>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  require(s.size() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                " input, got " + shape_str(s));
}

template <typename T>
void accumulate(const std::shared_ptr<Node<T>>& n, const Vec<T>& g) {
  if (n->requires_grad) n->grad_buffer() += g;
}

// im2col for a single-group convolution; rows are (c, ky, kx), columns (oy, ox).
template <typename T>
RowMatrix<T> im2col(const T* x, Index C, Index H, Index W, Index k, Index s, Index p, Index Ho,
                    Index Wo) {
  RowMatrix<T> col(C * k * k, Ho * Wo);
  for (Index c = 0; c < C; ++c)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        T* row = col.row((c * k + ky) * k + kx).data();
        for (Index oy = 0; oy < Ho; ++oy) {
          const Index iy = oy * s + ky - p;
          T* dst = row + oy * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, T(0));
            continue;
          }
          const T* src = x + (c * H + iy) * W;
          for (Index ox = 0; ox < Wo; ++ox) {
            const Index ix = ox * s + kx - p;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
  return col;
}

template <typename T>
void col2im_add(const RowMatrix<T>& col, T* dx, Index C, Index H, Index W, Index k, Index s,
                Index p, Index Ho, Index Wo) {
  for (Index c = 0; c < C; ++c)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        const T* row = col.row((c * k + ky) * k + kx).data();
        for (Index oy = 0; oy < Ho; ++oy) {
          const Index iy = oy * s + ky - p;
          if (iy < 0 || iy >= H) continue;
          T* dst = dx + (c * H + iy) * W;
          const T* src = row + oy * Wo;
          for (Index ox = 0; ox < Wo; ++ox) {
            const Index ix = ox * s + kx - p;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
}

template <typename T>
Tensor<T> conv2d_dense(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                       Index s, Index p, Index Ho, Index Wo) {
  const Index C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const Index O = weight.dim(0), k = weight.dim(2);
  const Index P = Ho * Wo;
  const bool pointwise = (k == 1 && s == 1 && p == 0);

  auto col = std::make_shared<RowMatrix<T>>();
  if (pointwise) {
    *col = CMapM<T>(input.data().data(), C, P);
  } else {
    *col = im2col(input.data().data(), C, H, W, k, s, p, Ho, Wo);
  }
  Vec<T> out(O * P);
  MapM<T> Y(out.data(), O, P);
  CMapM<T> Wm(weight.data().data(), O, C * k * k);
  Y.noalias() = Wm * (*col);
  if (bias.defined()) Y.colwise() += bias.data().matrix();

  auto xn = input.node();
  auto wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  return make_result<T>(
      "conv2d", {O, Ho, Wo}, std::move(out), {&input, &weight, &bias},
      [=](Node<T>& self) {
        CMapM<T> dY(self.grad.data(), O, P);
        if (wn->requires_grad) {
          MapM<T> dW(wn->grad_buffer().data(), O, C * k * k);
          dW.noalias() += dY * col->transpose();
        }
        if (bn && bn->requires_grad) bn->grad_buffer().matrix() += dY.rowwise().sum();
        if (xn->requires_grad) {
          CMapM<T> Wt(wn->value.data(), O, C * k * k);
          if (pointwise) {
            MapM<T>(xn->grad_buffer().data(), C, P).noalias() += Wt.transpose() * dY;
          } else {
            RowMatrix<T> dcol = Wt.transpose() * dY;
            col2im_add(dcol, xn->grad_buffer().data(), C, H, W, k, s, p, Ho, Wo);
          }
        }
      });
}

template <typename T>
Tensor<T> conv2d_depthwise(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           Index s, Index p, Index Ho, Index Wo) {
  const Index C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const Index k = weight.dim(2);
  const T* x = input.data().data();
  const T* w = weight.data().data();
  Vec<T> out(C * Ho * Wo);
  for (Index c = 0; c < C; ++c) {
    const T b = bias.defined() ? bias.data()[c] : T(0);
    for (Index oy = 0; oy < Ho; ++oy)
      for (Index ox = 0; ox < Wo; ++ox) {
        T acc = b;
        for (Index ky = 0; ky < k; ++ky) {
          const Index iy = oy * s + ky - p;
          if (iy < 0 || iy >= H) continue;
          for (Index kx = 0; kx < k; ++kx) {
            const Index ix = ox * s + kx - p;
            if (ix < 0 || ix >= W) continue;
            acc += w[(c * k + ky) * k + kx] * x[(c * H + iy) * W + ix];
          }
        }
        out[(c * Ho + oy) * Wo + ox] = acc;
      }
  }
  auto xn = input.node();
  auto wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  return make_result<T>(
      "conv2d(depthwise)", {C, Ho, Wo}, std::move(out), {&input, &weight, &bias},
      [=](Node<T>& self) {
        const T* dy = self.grad.data();
        T* dx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
        T* dw = wn->requires_grad ? wn->grad_buffer().data() : nullptr;
        const T* xv = xn->value.data();
        const T* wv = wn->value.data();
        for (Index c = 0; c < C; ++c) {
          T db = 0;
          for (Index oy = 0; oy < Ho; ++oy)
            for (Index ox = 0; ox < Wo; ++ox) {
              const T g = dy[(c * Ho + oy) * Wo + ox];
              db += g;
              for (Index ky = 0; ky < k; ++ky) {
                const Index iy = oy * s + ky - p;
                if (iy < 0 || iy >= H) continue;
                for (Index kx = 0; kx < k; ++kx) {
                  const Index ix = ox * s + kx - p;
                  if (ix < 0 || ix >= W) continue;
                  const Index xi = (c * H + iy) * W + ix;
                  const Index wi = (c * k + ky) * k + kx;
                  if (dx) dx[xi] += g * wv[wi];
                  if (dw) dw[wi] += g * xv[xi];
                }
              }
            }
          if (bn && bn->requires_grad) bn->grad_buffer()[c] += db;
        }
      });
}

// Broadcasting helpers for same-rank elementwise binaries.
struct Broadcast {
  Shape out;
  std::vector<Index> xs, ys;  // strides into x / y, 0 on broadcast axes
  bool same = false;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  require(a.size() == b.size(), std::string(op) + ": rank mismatch " + shape_str(a) + " vs " +
                                    shape_str(b));
  Broadcast plan;
  plan.same = (a == b);
  const std::size_t r = a.size();
  plan.out.resize(r);
  plan.xs.assign(r, 0);
  plan.ys.assign(r, 0);
  for (std::size_t i = 0; i < r; ++i) {
    require(a[i] == b[i] || a[i] == 1 || b[i] == 1,
            std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
    plan.out[i] = std::max(a[i], b[i]);
  }
  Index sa = 1, sb = 1;
  for (std::size_t i = r; i-- > 0;) {
    plan.xs[i] = (a[i] == 1 && plan.out[i] != 1) ? 0 : sa;
    plan.ys[i] = (b[i] == 1 && plan.out[i] != 1) ? 0 : sb;
    sa *= a[i];
    sb *= b[i];
  }
  return plan;
}

// Calls f(out_index, x_index, y_index) for every output element.
template <typename F>
void for_each_broadcast(const Broadcast& plan, F&& f) {
  const std::size_t r = plan.out.size();
  const Index n = numel(plan.out);
  std::vector<Index> idx(r, 0);
  Index xi = 0, yi = 0;
  for (Index o = 0; o < n; ++o) {
    f(o, xi, yi);
    for (std::size_t a = r; a-- > 0;) {
      ++idx[a];
      xi += plan.xs[a];
      yi += plan.ys[a];
      if (idx[a] < plan.out[a]) break;
      xi -= plan.xs[a] * idx[a];
      yi -= plan.ys[a] * idx[a];
      idx[a] = 0;
    }
  }
}

enum class BinOp { Add, Sub, Mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& x, const Tensor<T>& y, BinOp op, const char* name) {
  Broadcast plan = plan_broadcast(x.shape(), y.shape(), name);
  auto xn = x.node();
  auto yn = y.node();
  Vec<T> out;
  if (plan.same) {
    switch (op) {
      case BinOp::Add: out = x.data() + y.data(); break;
      case BinOp::Sub: out = x.data() - y.data(); break;
      case BinOp::Mul: out = x.data() * y.data(); break;
    }
  } else {
    out.resize(numel(plan.out));
    const T* xv = x.data().data();
    const T* yv = y.data().data();
    for_each_broadcast(plan, [&](Index o, Index xi, Index yi) {
      switch (op) {
        case BinOp::Add: out[o] = xv[xi] + yv[yi]; break;
        case BinOp::Sub: out[o] = xv[xi] - yv[yi]; break;
        case BinOp::Mul: out[o] = xv[xi] * yv[yi]; break;
      }
    });
  }
  Shape shape = plan.out;
  return make_result<T>(name, std::move(shape), std::move(out), {&x, &y}, [=](Node<T>& self) {
    const Vec<T>& g = self.grad;
    if (plan.same) {
      switch (op) {
        case BinOp::Add:
          accumulate(xn, g);
          accumulate(yn, g);
          break;
        case BinOp::Sub:
          accumulate(xn, g);
          if (yn->requires_grad) yn->grad_buffer() -= g;
          break;
        case BinOp::Mul:
          if (xn->requires_grad) xn->grad_buffer() += g * yn->value;
          if (yn->requires_grad) yn->grad_buffer() += g * xn->value;
          break;
      }
      return;
    }
    T* dx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
    T* dy = yn->requires_grad ? yn->grad_buffer().data() : nullptr;
    const T* xv = xn->value.data();
    const T* yv = yn->value.data();
    for_each_broadcast(plan, [&](Index o, Index xi, Index yi) {
      switch (op) {
        case BinOp::Add:
          if (dx) dx[xi] += g[o];
          if (dy) dy[yi] += g[o];
          break;
        case BinOp::Sub:
          if (dx) dx[xi] += g[o];
          if (dy) dy[yi] -= g[o];
          break;
        case BinOp::Mul:
          if (dx) dx[xi] += g[o] * yv[yi];
          if (dy) dy[yi] += g[o] * xv[xi];
          break;
      }
    });
  });
}

// Elementwise unary helper: value = f(x), grad = g * df(x, value).
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, const char* name, F f, DF df) {
  Vec<T> out = x.data().unaryExpr(f);
  auto xn = x.node();
  return make_result<T>(name, x.shape(), out, {&x}, [=](Node<T>& self) {
    if (!xn->requires_grad) return;
    Vec<T>& dx = xn->grad_buffer();
    const Vec<T>& xv = xn->value;
    for (Index i = 0; i < xv.size(); ++i) dx[i] += self.grad[i] * df(xv[i], self.value[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Index stride, Index padding, Index groups) {
  require_rank(input.shape(), 3, "conv2d");
  require_rank(weight.shape(), 4, "conv2d weight");
  require(stride > 0 && padding >= 0, "conv2d: stride must be positive, padding non-negative");
  const Index C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const Index O = weight.dim(0), k = weight.dim(2);
  require(weight.dim(3) == k, "conv2d: kernel must be square, got " + shape_str(weight.shape()));
  require(k <= H + 2 * padding && k <= W + 2 * padding,
          "conv2d: kernel " + std::to_string(k) + " larger than padded input " +
              shape_str(input.shape()));
  if (bias.defined())
    require(bias.rank() == 1 && bias.dim(0) == O,
            "conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                std::to_string(O) + " output channels");
  const Index Ho = (H + 2 * padding - k) / stride + 1;
  const Index Wo = (W + 2 * padding - k) / stride + 1;
  if (groups == 1) {
    require(weight.dim(1) == C, "conv2d: weight " + shape_str(weight.shape()) +
                                    " incompatible with input " + shape_str(input.shape()));
    return conv2d_dense(input, weight, bias, stride, padding, Ho, Wo);
  }
  require(groups == C && O == C && weight.dim(1) == 1,
          "conv2d: only groups == 1 or depthwise (groups == channels) supported");
  return conv2d_depthwise(input, weight, bias, stride, padding, Ho, Wo);
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, Index r) {
  require_rank(input.shape(), 3, "pixel_shuffle");
  require(r > 0, "pixel_shuffle: factor must be positive");
  const Index Cin = input.dim(0), H = input.dim(1), W = input.dim(2);
  require(Cin % (r * r) == 0, "pixel_shuffle: channel count " + std::to_string(Cin) +
                                  " not divisible by " + std::to_string(r * r));
  const Index C = Cin / (r * r);
  const Index Ho = H * r, Wo = W * r;
  // perm[out_index] = in_index
  auto perm = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(Cin * H * W));
  for (Index c = 0; c < C; ++c)
    for (Index y = 0; y < Ho; ++y)
      for (Index x = 0; x < Wo; ++x) {
        const Index ic = c * r * r + (y % r) * r + (x % r);
        (*perm)[static_cast<std::size_t>((c * Ho + y) * Wo + x)] = (ic * H + y / r) * W + x / r;
      }
  Vec<T> out(Cin * H * W);
  const T* in = input.data().data();
  for (std::size_t i = 0; i < perm->size(); ++i) out[static_cast<Index>(i)] = in[(*perm)[i]];
  auto xn = input.node();
  return make_result<T>("pixel_shuffle", {C, Ho, Wo}, std::move(out), {&input},
                        [=](Node<T>& self) {
                          T* dx = xn->grad_buffer().data();
                          for (std::size_t i = 0; i < perm->size(); ++i)
                            dx[(*perm)[i]] += self.grad[static_cast<Index>(i)];
                        });
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, Index out_h, Index out_w) {
  require_rank(input.shape(), 3, "resize_bilinear");
  require(out_h > 0 && out_w > 0, "resize_bilinear: output dims must be positive");
  const Index C = input.dim(0), H = input.dim(1), W = input.dim(2);
  struct Tap {
    Index i0, i1;
    T w1;
  };
  auto taps = [](Index in, Index out) {
    std::vector<Tap> t(static_cast<std::size_t>(out));
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (Index o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const Index i0 = static_cast<Index>(std::floor(src));
      const Index i1 = std::min(i0 + 1, in - 1);
      t[static_cast<std::size_t>(o)] = {i0, i1, static_cast<T>(src - static_cast<double>(i0))};
    }
    return t;
  };
  const auto ty = taps(H, out_h);
  const auto tx = taps(W, out_w);
  Vec<T> out(C * out_h * out_w);
  const T* in = input.data().data();
  for (Index c = 0; c < C; ++c)
    for (Index y = 0; y < out_h; ++y) {
      const Tap& a = ty[static_cast<std::size_t>(y)];
      for (Index x = 0; x < out_w; ++x) {
        const Tap& b = tx[static_cast<std::size_t>(x)];
        const T* p = in + c * H * W;
        const T top = p[a.i0 * W + b.i0] * (1 - b.w1) + p[a.i0 * W + b.i1] * b.w1;
        const T bot = p[a.i1 * W + b.i0] * (1 - b.w1) + p[a.i1 * W + b.i1] * b.w1;
        out[(c * out_h + y) * out_w + x] = top * (1 - a.w1) + bot * a.w1;
      }
    }
  auto xn = input.node();
  return make_result<T>("resize_bilinear", {C, out_h, out_w}, std::move(out), {&input},
                        [=](Node<T>& self) {
                          T* dx = xn->grad_buffer().data();
                          for (Index c = 0; c < C; ++c)
                            for (Index y = 0; y < out_h; ++y) {
                              const Tap& a = ty[static_cast<std::size_t>(y)];
                              for (Index x = 0; x < out_w; ++x) {
                                const Tap& b = tx[static_cast<std::size_t>(x)];
                                const T g = self.grad[(c * out_h + y) * out_w + x];
                                T* p = dx + c * H * W;
                                p[a.i0 * W + b.i0] += g * (1 - a.w1) * (1 - b.w1);
                                p[a.i0 * W + b.i1] += g * (1 - a.w1) * b.w1;
                                p[a.i1 * W + b.i0] += g * a.w1 * (1 - b.w1);
                                p[a.i1 * W + b.i1] += g * a.w1 * b.w1;
                              }
                            }
                        });
}

template <typename T>
Tensor<T> replicate_pad_to_even(const Tensor<T>& input) {
  require_rank(input.shape(), 3, "replicate_pad_to_even");
  const Index C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const Index Hp = H + (H % 2), Wp = W + (W % 2);
  if (Hp == H && Wp == W) return input;
  Vec<T> out(C * Hp * Wp);
  auto src_index = [=](Index c, Index y, Index x) {
    return (c * H + std::min(y, H - 1)) * W + std::min(x, W - 1);
  };
  for (Index c = 0; c < C; ++c)
    for (Index y = 0; y < Hp; ++y)
      for (Index x = 0; x < Wp; ++x) out[(c * Hp + y) * Wp + x] = input.data()[src_index(c, y, x)];
  auto xn = input.node();
  return make_result<T>("replicate_pad_to_even", {C, Hp, Wp}, std::move(out), {&input},
                        [=](Node<T>& self) {
                          T* dx = xn->grad_buffer().data();
                          for (Index c = 0; c < C; ++c)
                            for (Index y = 0; y < Hp; ++y)
                              for (Index x = 0; x < Wp; ++x)
                                dx[src_index(c, y, x)] += self.grad[(c * Hp + y) * Wp + x];
                        });
}

template <typename T>
Tensor<T> harmonic(const Tensor<T>& x, const Tensor<T>& omega1, const Tensor<T>& omega2) {
  require(omega1.size() == 1 && omega2.size() == 1, "harmonic: omega1/omega2 must be scalars");
  const T w1 = omega1.item(), w2 = omega2.item();
  Vec<T> s = x.data().sin();
  Vec<T> c = x.data().cos();
  Vec<T> out = w1 * s + w2 * c;
  auto xn = x.node(), an = omega1.node(), bn = omega2.node();
  return make_result<T>("harmonic", x.shape(), std::move(out), {&x, &omega1, &omega2},
                        [=](Node<T>& self) {
                          const Vec<T>& g = self.grad;
                          const T a = an->value[0], b = bn->value[0];
                          if (xn->requires_grad) xn->grad_buffer() += g * (a * c - b * s);
                          if (an->requires_grad) an->grad_buffer()[0] += (g * s).sum();
                          if (bn->requires_grad) bn->grad_buffer()[0] += (g * c).sum();
                        });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T k = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T a = static_cast<T>(0.044715);
  return unary(
      x, "gelu",
      [](T v) { return T(0.5) * v * (T(1) + std::tanh(k * (v + a * v * v * v))); },
      [](T v, T) {
        const T t = std::tanh(k * (v + a * v * v * v));
        return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * k * (T(1) + T(3) * a * v * v);
      });
}

template <typename T>
Tensor<T> sin(const Tensor<T>& x) {
  return unary(x, "sin", [](T v) { return std::sin(v); }, [](T v, T) { return std::cos(v); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      x, "abs", [](T v) { return std::abs(v); },
      [](T v, T) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> add(const Tensor<T>& x, const Tensor<T>& y) {
  return binary(x, y, BinOp::Add, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& x, const Tensor<T>& y) {
  return binary(x, y, BinOp::Sub, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& x, const Tensor<T>& y) {
  return binary(x, y, BinOp::Mul, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  auto xn = x.node();
  return make_result<T>("scale", x.shape(), x.data() * factor, {&x}, [=](Node<T>& self) {
    xn->grad_buffer() += self.grad * factor;
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  auto xn = x.node();
  return make_result<T>("add_scalar", x.shape(), x.data() + offset, {&x},
                        [=](Node<T>& self) { xn->grad_buffer() += self.grad; });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  auto xn = x.node();
  Vec<T> out(1);
  out[0] = x.data().sum();
  return make_result<T>("sum", {1}, std::move(out), {&x},
                        [=](Node<T>& self) { xn->grad_buffer() += self.grad[0]; });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  auto xn = x.node();
  const T inv = T(1) / static_cast<T>(x.size());
  Vec<T> out(1);
  out[0] = x.data().sum() * inv;
  return make_result<T>("mean", {1}, std::move(out), {&x},
                        [=](Node<T>& self) { xn->grad_buffer() += self.grad[0] * inv; });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat: no inputs");
  Shape shape = parts.front().shape();
  require(!shape.empty(), "concat: rank-0 input");
  Index total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = shape;
    require(a.size() == b.size(), "concat: rank mismatch");
    a[0] = b[0] = 0;
    require(a == b, "concat: non-leading dims differ: " + shape_str(p.shape()) + " vs " +
                        shape_str(parts.front().shape()));
    total += p.dim(0);
  }
  shape[0] = total;
  Vec<T> out(numel(shape));
  std::vector<const Tensor<T>*> inputs;
  std::vector<std::shared_ptr<Node<T>>> nodes;
  Index offset = 0;
  for (const auto& p : parts) {
    out.segment(offset, p.size()) = p.data();
    offset += p.size();
    inputs.push_back(&p);
    nodes.push_back(p.node());
  }
  return make_result<T>("concat", std::move(shape), std::move(out), inputs, [=](Node<T>& self) {
    Index off = 0;
    for (const auto& n : nodes) {
      const Index len = n->value.size();
      if (n->requires_grad) n->grad_buffer() += self.grad.segment(off, len);
      off += len;
    }
  });
}

template <typename T>
Tensor<T> slice0(const Tensor<T>& x, Index begin, Index count) {
  require(x.rank() >= 1, "slice0: rank-0 input");
  require(begin >= 0 && count >= 0 && begin + count <= x.dim(0),
          "slice0: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
              ") out of bounds for " + shape_str(x.shape()));
  Shape shape = x.shape();
  const Index inner = x.size() / shape[0];
  shape[0] = count;
  auto xn = x.node();
  return make_result<T>("slice0", std::move(shape), x.data().segment(begin * inner, count * inner),
                        {&x}, [=](Node<T>& self) {
                          xn->grad_buffer().segment(begin * inner, count * inner) += self.grad;
                        });
}

template <typename T>
Tensor<T> select0(const Tensor<T>& x, Index index) {
  require(x.rank() >= 2, "select0: needs rank >= 2, got " + shape_str(x.shape()));
  if (index < 0 || index >= x.dim(0))
    throw InvalidArgument("index " + std::to_string(index) + " out of range for leading dim " +
                          std::to_string(x.dim(0)));
  Shape shape(x.shape().begin() + 1, x.shape().end());
  return reshape(slice0(x, index, 1), std::move(shape));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require(numel(shape) == x.size(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  auto xn = x.node();
  return make_result<T>("reshape", std::move(shape), x.data(), {&x},
                        [=](Node<T>& self) { xn->grad_buffer() += self.grad; });
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "stack: no inputs");
  std::vector<Tensor<T>> lifted;
  lifted.reserve(parts.size());
  for (const auto& p : parts) {
    require(p.shape() == parts.front().shape(), "stack: shape mismatch");
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(p, std::move(s)));
  }
  return concat(lifted);
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dims differ: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  Vec<T> out(m * n);
  MapM<T>(out.data(), m, n).noalias() = CMapM<T>(a.data().data(), m, k) *
                                       CMapM<T>(b.data().data(), k, n);
  auto an = a.node(), bn = b.node();
  return make_result<T>("matmul", {m, n}, std::move(out), {&a, &b}, [=](Node<T>& self) {
    CMapM<T> g(self.grad.data(), m, n);
    if (an->requires_grad)
      MapM<T>(an->grad_buffer().data(), m, k).noalias() +=
          g * CMapM<T>(bn->value.data(), k, n).transpose();
    if (bn->requires_grad)
      MapM<T>(bn->grad_buffer().data(), k, n).noalias() +=
          CMapM<T>(an->value.data(), m, k).transpose() * g;
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a.shape(), 2, "transpose");
  const Index m = a.dim(0), n = a.dim(1);
  Vec<T> out(m * n);
  MapM<T>(out.data(), n, m) = CMapM<T>(a.data().data(), m, n).transpose();
  auto an = a.node();
  return make_result<T>("transpose", {n, m}, std::move(out), {&a}, [=](Node<T>& self) {
    MapM<T>(an->grad_buffer().data(), m, n) += CMapM<T>(self.grad.data(), n, m).transpose();
  });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  require_rank(a.shape(), 2, "softmax_rows");
  const Index m = a.dim(0), n = a.dim(1);
  Vec<T> out(m * n);
  CMapM<T> A(a.data().data(), m, n);
  MapM<T> S(out.data(), m, n);
  for (Index i = 0; i < m; ++i) {
    const T mx = A.row(i).maxCoeff();
    S.row(i) = (A.row(i).array() - mx).exp().matrix();
    S.row(i) /= S.row(i).sum();
  }
  auto an = a.node();
  return make_result<T>("softmax_rows", {m, n}, std::move(out), {&a}, [=](Node<T>& self) {
    CMapM<T> s(self.value.data(), m, n);
    CMapM<T> g(self.grad.data(), m, n);
    MapM<T> dA(an->grad_buffer().data(), m, n);
    for (Index i = 0; i < m; ++i) {
      const T dot = s.row(i).dot(g.row(i));
      dA.row(i).array() += s.row(i).array() * (g.row(i).array() - dot);
    }
  });
}

template <typename T>
Tensor<T> layer_norm_channels(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              double eps) {
  require_rank(x.shape(), 3, "layer_norm_channels");
  const Index C = x.dim(0), P = x.dim(1) * x.dim(2);
  require(gamma.size() == C && beta.size() == C,
          "layer_norm_channels: scale/shift must have " + std::to_string(C) + " entries");
  CMapM<T> X(x.data().data(), C, P);
  auto xhat = std::make_shared<RowMatrix<T>>(C, P);
  auto inv_std = std::make_shared<Eigen::Matrix<T, 1, Eigen::Dynamic>>(P);
  const Eigen::Matrix<T, 1, Eigen::Dynamic> mu = X.colwise().mean();
  for (Index p = 0; p < P; ++p) {
    const auto centered = (X.col(p).array() - mu[p]);
    const T var = centered.square().mean();
    const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
    (*inv_std)[p] = is;
    xhat->col(p) = (centered * is).matrix();
  }
  Vec<T> out(C * P);
  MapM<T> Y(out.data(), C, P);
  Y = (xhat->array().colwise() * gamma.data()).colwise() + beta.data();
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_result<T>(
      "layer_norm_channels", x.shape(), std::move(out), {&x, &gamma, &beta}, [=](Node<T>& self) {
        CMapM<T> G(self.grad.data(), C, P);
        if (gn->requires_grad)
          gn->grad_buffer() += (G.array() * xhat->array()).rowwise().sum();
        if (bn->requires_grad) bn->grad_buffer() += G.array().rowwise().sum();
        if (xn->requires_grad) {
          MapM<T> dX(xn->grad_buffer().data(), C, P);
          const RowMatrix<T> dxhat = (G.array().colwise() * gn->value).matrix();
          const T invC = T(1) / static_cast<T>(C);
          for (Index p = 0; p < P; ++p) {
            const T s1 = dxhat.col(p).sum();
            const T s2 = dxhat.col(p).dot(xhat->col(p));
            dX.col(p).array() += (*inv_std)[p] * (dxhat.col(p).array() - invC * s1 -
                                                  xhat->col(p).array() * (invC * s2));
          }
        }
      });
}

#define HFNRV_INSTANTIATE_OPS(T)                                                                \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Index, Index, \
                            Index);                                                             \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, Index);                                    \
  template Tensor<T> resize_bilinear(const Tensor<T>&, Index, Index);                           \
  template Tensor<T> replicate_pad_to_even(const Tensor<T>&);                                   \
  template Tensor<T> harmonic(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> gelu(const Tensor<T>&);                                                    \
  template Tensor<T> sin(const Tensor<T>&);                                                     \
  template Tensor<T> abs(const Tensor<T>&);                                                     \
  template Tensor<T> square(const Tensor<T>&);                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                                \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                           \
  template Tensor<T> sum(const Tensor<T>&);                                                     \
  template Tensor<T> mean(const Tensor<T>&);                                                    \
  template Tensor<T> concat(const std::vector<Tensor<T>>&);                                     \
  template Tensor<T> slice0(const Tensor<T>&, Index, Index);                                    \
  template Tensor<T> select0(const Tensor<T>&, Index);                                          \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                          \
  template Tensor<T> stack(const std::vector<Tensor<T>>&);                                      \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> transpose(const Tensor<T>&);                                               \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                            \
  template Tensor<T> layer_norm_channels(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                         double);

HFNRV_INSTANTIATE_OPS(float)
HFNRV_INSTANTIATE_OPS(double)

}  // namespace hfnrv
