#include "hfnrv/loss.hpp"

#include <cmath>
#include <optional>

#include "hfnrv/fft.hpp"
#include "hfnrv/ops.hpp"

namespace hfnrv {

std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::Full: return "full";
    case LossVariant::SpaOnly: return "spa_only";
    case LossVariant::L2Only: return "l2_only";
    case LossVariant::NoLog: return "no_log";
  }
  return "?";
}

LossVariant loss_variant_from_string(const std::string& s) {
  if (s == "full") return LossVariant::Full;
  if (s == "spa_only") return LossVariant::SpaOnly;
  if (s == "l2_only") return LossVariant::L2Only;
  if (s == "no_log") return LossVariant::NoLog;
  throw InvalidArgument("unknown loss variant '" + s + "'");
}

void validate(const LossConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
    throw InvalidArgument("loss.alpha must lie in [0, 1], got " + std::to_string(cfg.alpha));
  if (!(cfg.mu >= 0.0) || !std::isfinite(cfg.mu))
    throw InvalidArgument("loss.mu must be >= 0, got " + std::to_string(cfg.mu));
}

std::vector<double> ssim_window(Index n) {
  const Index len = std::min<Index>(kSsimWindow, n);
  std::vector<double> g(static_cast<std::size_t>(len));
  const double c = 0.5 * static_cast<double>(len - 1);
  double total = 0;
  for (Index i = 0; i < len; ++i) {
    const double d = static_cast<double>(i) - c;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= total;
  return g;
}

namespace {

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b)
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_chw(const Shape& s, const char* op) {
  if (s.size() != 3) throw InvalidArgument(std::string(op) + ": expected C×H×W, got " + shape_str(s));
}

/// Separable valid-region Gaussian filtering of one H×W plane.
template <typename T>
struct SeparableFilter {
  std::vector<T> gy, gx;
  Index H, W, oh, ow;

  SeparableFilter(Index h, Index w) : H(h), W(w) {
    for (double v : ssim_window(h)) gy.push_back(static_cast<T>(v));
    for (double v : ssim_window(w)) gx.push_back(static_cast<T>(v));
    oh = H - static_cast<Index>(gy.size()) + 1;
    ow = W - static_cast<Index>(gx.size()) + 1;
  }

  // out: oh×ow
  void apply(const T* in, T* out) const {
    std::vector<T> tmp(static_cast<std::size_t>(H * ow));
    const Index kx = static_cast<Index>(gx.size()), ky = static_cast<Index>(gy.size());
    for (Index i = 0; i < H; ++i)
      for (Index j = 0; j < ow; ++j) {
        T acc = 0;
        for (Index b = 0; b < kx; ++b) acc += gx[b] * in[i * W + j + b];
        tmp[i * ow + j] = acc;
      }
    for (Index i = 0; i < oh; ++i)
      for (Index j = 0; j < ow; ++j) {
        T acc = 0;
        for (Index a = 0; a < ky; ++a) acc += gy[a] * tmp[(i + a) * ow + j];
        out[i * ow + j] = acc;
      }
  }

  // Adjoint of apply: scatters an oh×ow map back onto H×W (accumulates).
  void adjoint(const T* g, T* out) const {
    std::vector<T> tmp(static_cast<std::size_t>(H * ow), T(0));
    const Index kx = static_cast<Index>(gx.size()), ky = static_cast<Index>(gy.size());
    for (Index i = 0; i < oh; ++i)
      for (Index j = 0; j < ow; ++j)
        for (Index a = 0; a < ky; ++a) tmp[(i + a) * ow + j] += gy[a] * g[i * ow + j];
    for (Index i = 0; i < H; ++i)
      for (Index j = 0; j < ow; ++j)
        for (Index b = 0; b < kx; ++b) out[i * W + j + b] += gx[b] * tmp[i * ow + j];
  }
};

}  // namespace

template <typename T>
Tensor<T> ssim(const Tensor<T>& x, const Tensor<T>& y) {
  require_chw(x.shape(), "ssim");
  require_same(x.shape(), y.shape(), "ssim");
  const Index C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const SeparableFilter<T> f(H, W);
  const Index P = H * W, N = f.oh * f.ow;
  const T c1 = static_cast<T>(kSsimK1 * kSsimK1), c2 = static_cast<T>(kSsimK2 * kSsimK2);

  // Per-position partials of the SSIM map w.r.t. μx, μy, E[x²], E[y²], E[xy].
  Vec<T> d_mx(C * N), d_my(C * N), d_exx(C * N), d_eyy(C * N), d_exy(C * N);
  Vec<T> sq(P), filtered(5 * N);
  double total = 0;
  for (Index c = 0; c < C; ++c) {
    const T* xp = x.data().data() + c * P;
    const T* yp = y.data().data() + c * P;
    T* mx = filtered.data();
    T* my = mx + N;
    T* exx = my + N;
    T* eyy = exx + N;
    T* exy = eyy + N;
    f.apply(xp, mx);
    f.apply(yp, my);
    for (Index i = 0; i < P; ++i) sq[i] = xp[i] * xp[i];
    f.apply(sq.data(), exx);
    for (Index i = 0; i < P; ++i) sq[i] = yp[i] * yp[i];
    f.apply(sq.data(), eyy);
    for (Index i = 0; i < P; ++i) sq[i] = xp[i] * yp[i];
    f.apply(sq.data(), exy);
    for (Index i = 0; i < N; ++i) {
      const T sxx = exx[i] - mx[i] * mx[i];
      const T syy = eyy[i] - my[i] * my[i];
      const T sxy = exy[i] - mx[i] * my[i];
      const T a1 = 2 * mx[i] * my[i] + c1, a2 = 2 * sxy + c2;
      const T b1 = mx[i] * mx[i] + my[i] * my[i] + c1, b2 = sxx + syy + c2;
      const T s = a1 * a2 / (b1 * b2);
      total += static_cast<double>(s);
      const Index k = c * N + i;
      d_mx[k] = s * (2 * my[i] / a1 - 2 * my[i] / a2 - 2 * mx[i] / b1 + 2 * mx[i] / b2);
      d_my[k] = s * (2 * mx[i] / a1 - 2 * mx[i] / a2 - 2 * my[i] / b1 + 2 * my[i] / b2);
      d_exx[k] = -s / b2;
      d_eyy[k] = -s / b2;
      d_exy[k] = 2 * s / a2;
    }
  }
  Vec<T> value(1);
  value[0] = static_cast<T>(total / static_cast<double>(C * N));
  auto xn = x.node(), yn = y.node();
  return detail::make_result<T>(
      "ssim", {1}, std::move(value), {&x, &y},
      [=](detail::Node<T>& self) {
        const T up = self.grad[0] / static_cast<T>(C * N);
        // d/dx = Gᵀ(∂μx) + 2x·Gᵀ(∂E[x²]) + y·Gᵀ(∂E[xy]); symmetric for y.
        auto accumulate = [&](detail::Node<T>& target, const Vec<T>& dm, const Vec<T>& dsq,
                              const T* self_plane, const T* other_plane) {
          T* g = target.grad_buffer().data();
          std::vector<T> a(static_cast<std::size_t>(P)), b(static_cast<std::size_t>(P)),
              cc(static_cast<std::size_t>(P));
          for (Index c = 0; c < C; ++c) {
            std::fill(a.begin(), a.end(), T(0));
            std::fill(b.begin(), b.end(), T(0));
            std::fill(cc.begin(), cc.end(), T(0));
            f.adjoint(dm.data() + c * N, a.data());
            f.adjoint(dsq.data() + c * N, b.data());
            f.adjoint(d_exy.data() + c * N, cc.data());
            const T* sp = self_plane + c * P;
            const T* op = other_plane + c * P;
            for (Index i = 0; i < P; ++i)
              g[c * P + i] += up * (a[i] + 2 * sp[i] * b[i] + op[i] * cc[i]);
          }
        };
        const T* xp = xn->value.data();
        const T* yp = yn->value.data();
        if (xn->requires_grad) accumulate(*xn, d_mx, d_exx, xp, yp);
        if (yn->requires_grad) accumulate(*yn, d_my, d_eyy, yp, xp);
      });
}

template <typename T>
Tensor<T> spatial_loss(const Tensor<T>& x_hat, const Tensor<T>& x, double alpha) {
  require_same(x_hat.shape(), x.shape(), "spatial_loss");
  const T a = static_cast<T>(alpha);
  Tensor<T> l1 = mean(abs(sub(x_hat, x)));
  Tensor<T> dssim = add_scalar(scale(ssim(x_hat, x), T(-1)), T(1));
  return add(scale(l1, a), scale(dssim, T(1) - a));
}

namespace {

/// Spectrum difference D = FFT(x̂) − FFT(x) per channel.
template <typename T>
std::vector<ComplexGrid<T>> spectrum_difference(const Tensor<T>& x_hat, const Tensor<T>& x) {
  require_chw(x_hat.shape(), "spectrum");
  require_same(x_hat.shape(), x.shape(), "spectrum");
  const Index C = x.dim(0), H = x.dim(1), W = x.dim(2);
  std::vector<ComplexGrid<T>> out;
  out.reserve(static_cast<std::size_t>(C));
  for (Index c = 0; c < C; ++c) {
    RealGrid<T> diff(H, W);
    for (Index i = 0; i < H * W; ++i)
      diff.data()[i] = x_hat.data()[c * H * W + i] - x.data()[c * H * W + i];
    // Linearity: FFT(x̂) − FFT(x) = FFT(x̂ − x).
    out.push_back(fft2d<T>(diff));
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> spectral_difference(const Tensor<T>& x_hat, const Tensor<T>& x) {
  const auto d = spectrum_difference(x_hat, x);
  const Index C = x.dim(0), HW = x.dim(1) * x.dim(2);
  Vec<T> v(C * HW);
  for (Index c = 0; c < C; ++c)
    for (Index i = 0; i < HW; ++i) v[c * HW + i] = std::abs(d[static_cast<std::size_t>(c)].data()[i]);
  return Tensor<T>(x.shape(), std::move(v));
}

template <typename T>
Tensor<T> spectral_weight(const Tensor<T>& x_hat, const Tensor<T>& x) {
  Tensor<T> mag = spectral_difference(x_hat, x);
  return Tensor<T>(mag.shape(), mag.data().log1p());
}

template <typename T>
Tensor<T> frequency_loss(const Tensor<T>& x_hat, const Tensor<T>& x, bool no_log,
                         const Tensor<T>* fixed_weight) {
  const auto d = spectrum_difference(x_hat, x);
  const Index C = x.dim(0), H = x.dim(1), W = x.dim(2), HW = H * W;
  if (fixed_weight && fixed_weight->shape() != x.shape())
    throw InvalidArgument("frequency_loss: weight shape " + shape_str(fixed_weight->shape()) +
                          " does not match " + shape_str(x.shape()));
  const T count = static_cast<T>(C * HW);
  Vec<T> weight(C * HW);
  double total = 0;
  for (Index c = 0; c < C; ++c)
    for (Index i = 0; i < HW; ++i) {
      const T m = std::abs(d[static_cast<std::size_t>(c)].data()[i]);
      const T w = fixed_weight ? fixed_weight->data()[c * HW + i] : (no_log ? m : std::log1p(m));
      weight[c * HW + i] = w;
      total += static_cast<double>(w) * static_cast<double>(m);
    }
  Vec<T> value(1);
  value[0] = static_cast<T>(total / static_cast<double>(count));
  auto xh = x_hat.node(), xn = x.node();
  return detail::make_result<T>(
      "frequency_loss", {1}, std::move(value), {&x_hat, &x},
      [=](detail::Node<T>& self) {
        const T up = self.grad[0] / count;
        // ∂/∂x̂ Σ W|D| = Re(IFFT(W·D/|D|)) for a unitary transform.
        for (Index c = 0; c < C; ++c) {
          ComplexGrid<T> u(H, W);
          const auto& dc = d[static_cast<std::size_t>(c)];
          for (Index i = 0; i < HW; ++i) {
            const T m = std::abs(dc.data()[i]);
            u.data()[i] = m > T(0) ? dc.data()[i] * (weight[c * HW + i] / m) : std::complex<T>(0);
          }
          const ComplexGrid<T> g = ifft2d<T>(u);
          if (xh->requires_grad) {
            T* out = xh->grad_buffer().data() + c * HW;
            for (Index i = 0; i < HW; ++i) out[i] += up * g.data()[i].real();
          }
          if (xn->requires_grad) {
            T* out = xn->grad_buffer().data() + c * HW;
            for (Index i = 0; i < HW; ++i) out[i] -= up * g.data()[i].real();
          }
        }
      });
}

template <typename T>
LossReport<T> total_loss(const Tensor<T>& x_hat, const Tensor<T>& x, const LossConfig& cfg,
                         const Tensor<T>* fixed_weight) {
  validate(cfg);
  require_chw(x_hat.shape(), "total_loss");
  require_same(x_hat.shape(), x.shape(), "total_loss");
  LossReport<T> r;
  const bool no_log = cfg.variant == LossVariant::NoLog;
  const bool spa_in = cfg.variant != LossVariant::L2Only;
  const bool fre_in = cfg.variant == LossVariant::Full || cfg.variant == LossVariant::NoLog;

  Tensor<T> spa, fre;
  {
    std::optional<NoGradGuard> guard;
    if (!spa_in) guard.emplace();
    spa = spatial_loss(x_hat, x, cfg.alpha);
  }
  {
    std::optional<NoGradGuard> guard;
    if (!fre_in) guard.emplace();
    fre = frequency_loss(x_hat, x, no_log, fixed_weight);
  }
  r.l_spa = static_cast<double>(spa.item());
  r.l_fre = static_cast<double>(fre.item());
  switch (cfg.variant) {
    case LossVariant::Full:
    case LossVariant::NoLog:
      r.objective = add(spa, scale(fre, static_cast<T>(cfg.mu)));
      break;
    case LossVariant::SpaOnly:
      r.objective = spa;
      break;
    case LossVariant::L2Only:
      r.objective = mean(square(sub(x_hat, x)));
      break;
  }
  r.l_total = static_cast<double>(r.objective.item());
  return r;
}

#define HFNRV_INSTANTIATE_LOSS(T)                                                             \
  template Tensor<T> ssim(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> spatial_loss(const Tensor<T>&, const Tensor<T>&, double);                \
  template Tensor<T> spectral_difference(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> spectral_weight(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> frequency_loss(const Tensor<T>&, const Tensor<T>&, bool, const Tensor<T>*); \
  template LossReport<T> total_loss(const Tensor<T>&, const Tensor<T>&, const LossConfig&,    \
                                    const Tensor<T>*);

HFNRV_INSTANTIATE_LOSS(float)
HFNRV_INSTANTIATE_LOSS(double)

}  // namespace hfnrv
