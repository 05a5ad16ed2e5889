#include "doctest.h"

#include <cmath>
#include <numbers>

#include "hfnrv/fft.hpp"
#include "hfnrv/grad_check.hpp"
#include "hfnrv/loss.hpp"
#include "hfnrv/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hfnrv;
using hfnrv::testing::random_tensor;
using TD = Tensor<double>;

namespace {

std::vector<oracle::Grid> channels(const TD& t) {
  std::vector<oracle::Grid> g;
  for (Index c = 0; c < t.dim(0); ++c) g.push_back(oracle::to_grid(t, c));
  return g;
}

double oracle_ssim(const TD& a, const TD& b) {
  double s = 0;
  for (Index c = 0; c < a.dim(0); ++c) s += oracle::ssim(oracle::to_grid(a, c), oracle::to_grid(b, c)).ssim;
  return s / static_cast<double>(a.dim(0));
}

double oracle_l1(const TD& a, const TD& b) { return (a.data() - b.data()).abs().mean(); }

// The 4×4 fixture: a ramp and a copy with one pixel raised and one lowered.
std::pair<TD, TD> fixture_4x4() {
  Vec<double> x(16), y(16);
  for (Index i = 0; i < 16; ++i) x[i] = y[i] = 0.05 * static_cast<double>(i) + 0.1;
  y[5] += 0.3;
  y[10] -= 0.15;
  return {TD({1, 4, 4}, y), TD({1, 4, 4}, x)};
}

}  // namespace

TEST_CASE("fft2d matches the naive DFT for every size up to 16x16") {
  double worst = 0;
  for (Index H = 1; H <= 16; ++H)
    for (Index W = 1; W <= 16; ++W) {
      const TD x = random_tensor({1, H, W}, static_cast<std::uint64_t>(H * 100 + W));
      RealGrid<double> g(H, W);
      for (Index i = 0; i < H * W; ++i) g.data()[i] = x.data()[i];
      const ComplexGrid<double> f = fft2d<double>(g);
      const oracle::CGrid ref = oracle::dft2d(oracle::to_grid(x));
      for (Index u = 0; u < H; ++u)
        for (Index v = 0; v < W; ++v) worst = std::max(worst, std::abs(f(u, v) - ref[u][v]));
      const ComplexGrid<double> back = ifft2d<double>(f);
      for (Index i = 0; i < H * W; ++i) worst = std::max(worst, std::abs(back.data()[i] - g.data()[i]));
    }
  CHECK(worst < 1e-9);
}

TEST_CASE("Parseval on random grids") {
  for (int s = 0; s < testing::kSeeds; ++s) {
    const Index H = 3 + s, W = 17 - s;
    RealGrid<double> g = RealGrid<double>::Random(H, W);
    const double e_spec = fft2d<double>(g).cwiseAbs2().sum();
    CHECK(std::abs(e_spec - g.squaredNorm()) < 1e-9);
  }
}

TEST_CASE("constant and impulse spectra") {
  RealGrid<double> c = RealGrid<double>::Constant(4, 6, 0.5);
  const auto fc = fft2d<double>(c);
  CHECK(std::abs(fc(0, 0) - std::complex<double>(0.5 * std::sqrt(24.0))) < 1e-12);
  for (Index i = 1; i < 24; ++i) CHECK(std::abs(fc.data()[i]) < 1e-12);

  RealGrid<double> d = RealGrid<double>::Zero(5, 7);
  d(0, 0) = 1;
  const auto fd = fft2d<double>(d);
  for (Index i = 0; i < 35; ++i) CHECK(std::abs(fd.data()[i]) == doctest::Approx(1 / std::sqrt(35.0)));
}

TEST_CASE("ssim basic properties") {
  const TD x = random_tensor({3, 16, 20}, 1, 0, 1);
  const TD y = random_tensor({3, 16, 20}, 2, 0, 1);
  CHECK(ssim(x, x).item() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ssim(x, y).item() == ssim(y, x).item());
  CHECK_THROWS_AS(ssim(x, random_tensor({3, 16, 21}, 3)), InvalidArgument);
}

TEST_CASE("ssim against the windowed oracle") {
  for (int s = 0; s < testing::kSeeds; ++s) {
    const Index H = 4 + 2 * s, W = 20 - s;
    const TD x = random_tensor({2, H, W}, s, 0, 1);
    const TD y = random_tensor({2, H, W}, 50 + s, 0, 1);
    CHECK(ssim(x, y).item() == doctest::Approx(oracle_ssim(x, y)).epsilon(1e-12));
  }
}

TEST_CASE("ssim of a binary checkerboard against its negative") {
  Vec<double> v(16 * 16);
  for (Index i = 0; i < 16; ++i)
    for (Index j = 0; j < 16; ++j) v[i * 16 + j] = static_cast<double>((i + j) % 2);
  const TD x({1, 16, 16}, v);
  const TD y({1, 16, 16}, 1.0 - v);
  const double s = ssim(x, y).item();
  CHECK(s < 0.0);
  CHECK(s == doctest::Approx(oracle_ssim(x, y)).epsilon(1e-12));
}

TEST_CASE("spatial loss") {
  const TD x = random_tensor({3, 12, 12}, 4, 0, 1);
  const TD y = random_tensor({3, 12, 12}, 5, 0, 1);
  CHECK(spatial_loss(x, x, 0.7).item() == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
  CHECK(spatial_loss(x, y, 1.0).item() == doctest::Approx(oracle_l1(x, y)).epsilon(1e-14));

  // Flat images offset by 0.1.
  const TD a = TD::full({1, 12, 12}, 0.5), b = TD::full({1, 12, 12}, 0.6);
  const double expect = 0.7 * 0.1 + 0.3 * (1 - oracle_ssim(b, a));
  CHECK(spatial_loss(b, a, 0.7).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("spectral weight") {
  const TD x = random_tensor({2, 6, 6}, 7);
  CHECK((spectral_weight(x, x).data() == 0.0).all());

  // A constant difference only touches DC; choose it so |ΔF| = e − 1 there.
  const double c = (std::numbers::e - 1) / std::sqrt(36.0);
  const TD w = spectral_weight(add_scalar(x, c), x);
  CHECK(w.at({0, 0, 0}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w.at({1, 0, 0}) == doctest::Approx(1.0).epsilon(1e-12));
  for (Index i = 1; i < 36; ++i) CHECK(std::abs(w.data()[i]) < 1e-12);
}

TEST_CASE("frequency loss against the DFT oracle") {
  {
    const TD x = random_tensor({1, 4, 4}, 8);
    CHECK(frequency_loss(x, x).item() == 0.0);
    TD y = x.detach();
    y.mutable_data()[6] += 0.25;
    CHECK(frequency_loss(y, x).item() ==
          doctest::Approx(oracle::frequency_loss(channels(y), channels(x))).epsilon(1e-12));
  }
  for (int s = 0; s < testing::kSeeds; ++s) {
    const TD a = random_tensor({3, 5, 7}, s), b = random_tensor({3, 5, 7}, 30 + s);
    CHECK(frequency_loss(a, b).item() ==
          doctest::Approx(oracle::frequency_loss(channels(a), channels(b))).epsilon(1e-12));
    CHECK(frequency_loss(a, b, true).item() ==
          doctest::Approx(oracle::frequency_loss(channels(a), channels(b), true)).epsilon(1e-12));
  }
}

TEST_CASE("composite objective on the 4x4 fixture") {
  const auto [x_hat, x] = fixture_4x4();
  const LossConfig cfg;  // alpha 0.7, mu 100
  const double l1 = oracle_l1(x_hat, x);
  const double s = oracle_ssim(x_hat, x);
  const double lf = oracle::frequency_loss(channels(x_hat), channels(x));
  const double expect = 0.7 * l1 + 0.3 * (1 - s) + 100 * lf;
  const auto r = total_loss(x_hat, x, cfg);
  CHECK(std::abs(r.l_total - expect) < 1e-9);
  CHECK(std::abs(r.l_spa - (0.7 * l1 + 0.3 * (1 - s))) < 1e-9);
  CHECK(std::abs(r.l_fre - lf) < 1e-9);
}

TEST_CASE("variants") {
  const TD a = random_tensor({3, 8, 8}, 11, 0, 1), b = random_tensor({3, 8, 8}, 12, 0, 1);
  for (LossVariant v : {LossVariant::Full, LossVariant::SpaOnly, LossVariant::L2Only, LossVariant::NoLog}) {
    LossConfig cfg;
    cfg.variant = v;
    CHECK(total_loss(a, a, cfg).l_total == 0.0);
    CHECK(total_loss(a, a, cfg).objective.item() == 0.0);
  }
  LossConfig cfg;
  const auto full = total_loss(a, b, cfg);
  cfg.variant = LossVariant::SpaOnly;
  CHECK(total_loss(a, b, cfg).l_total == doctest::Approx(full.l_spa).epsilon(1e-14));
  cfg.variant = LossVariant::L2Only;
  CHECK(total_loss(a, b, cfg).l_total == doctest::Approx((a.data() - b.data()).square().mean()).epsilon(1e-14));
  cfg.variant = LossVariant::NoLog;
  CHECK(total_loss(a, b, cfg).l_total ==
        doctest::Approx(full.l_spa + 100 * oracle::frequency_loss(channels(a), channels(b), true)).epsilon(1e-12));
  LossConfig no_mu;
  no_mu.mu = 0;
  const auto r = total_loss(a, b, no_mu);
  CHECK(r.l_total == doctest::Approx(r.l_spa).epsilon(1e-15));

  CHECK(loss_variant_from_string(to_string(LossVariant::NoLog)) == LossVariant::NoLog);
  LossConfig bad;
  bad.alpha = 1.5;
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
}

TEST_CASE("objective vanishes only at equality") {
  const LossConfig cfg;
  for (int s = 0; s < testing::kSeeds; ++s) {
    const TD x = random_tensor({3, 8, 8}, s, 0, 1);
    CHECK(total_loss(x, x, cfg).l_total == 0.0);
    TD y = x.detach();
    y.mutable_data()[static_cast<Index>(s) * 17 % y.size()] += 1e-3;
    CHECK(total_loss(y, x, cfg).l_total > 0.0);
  }
}

TEST_CASE("loss grows with the perturbation amplitude") {
  const LossConfig cfg;
  const TD x = random_tensor({3, 8, 8}, 21, 0, 1);
  const TD d = random_tensor({3, 8, 8}, 22);
  double prev = 0;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    const double l = total_loss(add(x, scale(d, amp)), x, cfg).l_total;
    CHECK(l > prev);
    prev = l;
  }
}

TEST_CASE("finite differences") {
  for (int s = 0; s < testing::kSeeds; ++s) {
    const TD a = random_tensor({2, 6, 7}, s, 0, 1), b = random_tensor({2, 6, 7}, 40 + s, 0, 1);
    const TD fixed = spectral_weight(a, b);
    const auto fd = [](const ScalarFn<double>& fn, const std::vector<TD>& in) {
      return grad_check<double>(fn, in, testing::kFdStep);
    };
    CHECK(fd([](const auto& v) { return ssim(v[0], v[1]); }, {a, b}) < testing::kFdTol);
    CHECK(fd([](const auto& v) { return spatial_loss(v[0], v[1], 0.7); }, {a, b}) < testing::kFdTol);
    CHECK(fd([&](const auto& v) { return frequency_loss(v[0], v[1], false, &fixed); }, {a, b}) < testing::kFdTol);
    CHECK(fd([&](const auto& v) { return frequency_loss(v[0], v[1], true, &fixed); }, {a, b}) < testing::kFdTol);
    CHECK(fd([&](const auto& v) { return total_loss(v[0], v[1], LossConfig{}, &fixed).objective; }, {a, b}) <
          testing::kFdTol);
    LossConfig l2;
    l2.variant = LossVariant::L2Only;
    CHECK(fd([&](const auto& v) { return total_loss(v[0], v[1], l2).objective; }, {a, b}) < testing::kFdTol);
  }
}

TEST_CASE("default weight is held constant in the backward pass") {
  const TD a = random_tensor({1, 5, 5}, 3), b = random_tensor({1, 5, 5}, 4);
  const TD w = spectral_weight(a, b);
  const TD a1(a.shape(), a.data(), true), a2(a.shape(), a.data(), true);
  frequency_loss(a1, b).backward();
  frequency_loss(a2, b, false, &w).backward();
  CHECK(((a1.grad() - a2.grad()).abs() < 1e-15).all());
}
