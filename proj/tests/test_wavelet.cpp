#include "doctest.h"

#include "hfnrv/grad_check.hpp"
#include "hfnrv/ops.hpp"
#include "hfnrv/wavelet.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hfnrv;
using hfnrv::testing::random_tensor;
using TD = Tensor<double>;

namespace {

double energy(const TD& t) { return t.data().square().sum(); }

TD identity_1x1(Index c) {
  TD w = TD::zeros({c, c, 1, 1});
  for (Index i = 0; i < c; ++i) w.mutable_data()[i * c + i] = 1.0;
  return w;
}

}  // namespace

TEST_CASE("constant input: ll = 2, high bands zero") {
  const auto b = haar_dwt2d(TD::full({2, 4, 6}, 1.0));
  CHECK(b.ll.shape() == Shape{2, 2, 3});
  CHECK((b.ll.data() == 2.0).all());
  CHECK((b.lh.data() == 0.0).all());
  CHECK((b.hl.data() == 0.0).all());
  CHECK((b.hh.data() == 0.0).all());
}

TEST_CASE("single block low band is the scaled sum") {
  const auto b = haar_dwt2d(TD::from({1, 2, 2}, {0.3, -1.2, 2.5, 0.7}));
  CHECK(b.ll.item() == doctest::Approx((0.3 - 1.2 + 2.5 + 0.7) / 2).epsilon(1e-15));
}

TEST_CASE("checkerboard lands in hh with +2") {
  const auto b = haar_dwt2d(TD::from({1, 2, 2}, {1, -1, -1, 1}));
  CHECK(b.ll.item() == 0.0);
  CHECK(b.lh.item() == 0.0);
  CHECK(b.hl.item() == 0.0);
  CHECK(b.hh.item() == 2.0);
}

TEST_CASE("vertical and horizontal edges separate") {
  // Left/right split varies along columns: lh. Top/bottom split: hl.
  const auto cols = haar_dwt2d(TD::from({1, 2, 2}, {0, 1, 0, 1}));
  CHECK(cols.lh.item() == doctest::Approx(1.0));
  CHECK(cols.hl.item() == 0.0);
  const auto rows = haar_dwt2d(TD::from({1, 2, 2}, {0, 0, 1, 1}));
  CHECK(rows.hl.item() == doctest::Approx(1.0));
  CHECK(rows.lh.item() == 0.0);
}

TEST_CASE("round trip and energy on random inputs up to 8x64x64") {
  const Shape shapes[] = {{1, 2, 2}, {4, 8, 8}, {3, 16, 10}, {8, 64, 64}, {2, 6, 32}};
  int seed = 0;
  for (const Shape& s : shapes)
    for (int k = 0; k < 2; ++k) {
      const TD x = random_tensor(s, seed++);
      const auto b = haar_dwt2d(x);
      const TD y = haar_idwt2d(b);
      CHECK(testing::max_abs_diff(x, y) < 1e-9);
      const double e = energy(b.ll) + energy(b.lh) + energy(b.hl) + energy(b.hh);
      CHECK(std::abs(e - energy(x)) < 1e-9 * std::max(1.0, energy(x)));
    }
}

TEST_CASE("quantities of the inverse") {
  const SubbandSet<double> zero{TD::zeros({2, 3, 3}), TD::zeros({2, 3, 3}), TD::zeros({2, 3, 3}),
                                TD::zeros({2, 3, 3})};
  CHECK((haar_idwt2d(zero).data() == 0.0).all());

  const SubbandSet<double> dc{TD::full({1, 2, 2}, 3.0), TD::zeros({1, 2, 2}), TD::zeros({1, 2, 2}),
                              TD::zeros({1, 2, 2})};
  // Closed-form synthesis: each output pixel is ll/2.
  const TD y = haar_idwt2d(dc);
  CHECK(y.shape() == Shape{1, 4, 4});
  for (Index i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(1.5).epsilon(1e-15));

  SubbandSet<double> bad = dc;
  bad.hh = TD::zeros({1, 2, 3});
  CHECK_THROWS_AS(haar_idwt2d(bad), InvalidArgument);
}

TEST_CASE("odd sizes") {
  CHECK_THROWS_AS(haar_dwt2d(TD::zeros({1, 3, 4})), InvalidArgument);
  const TD x = random_tensor({1, 3, 5}, 4);
  const auto b = haar_dwt2d(x, true);
  CHECK(b.ll.shape() == Shape{1, 2, 3});
  const TD padded = replicate_pad_to_even(x);
  CHECK(testing::max_abs_diff(haar_idwt2d(b), padded) < 1e-12);
}

TEST_CASE("constant input gives zero high path") {
  WfdParams<double> p{random_tensor({3, 3, 1, 1}, 1), TD::zeros({3}), random_tensor({3, 3, 1, 1}, 2),
                      TD::zeros({3})};
  const auto out = wfd(TD::full({3, 8, 8}, 0.4), p);
  CHECK((out.high_raw.data() == 0.0).all());
  CHECK((out.high.data() == 0.0).all());
}

TEST_CASE("identity convs pass the low band") {
  WfdParams<double> p{identity_1x1(2), TD::zeros({2}), identity_1x1(2), TD::zeros({2})};
  const auto out = wfd(TD::full({2, 4, 4}, 1.0), p);
  CHECK((out.low.data() == 2.0).all());
}

TEST_CASE("high path matches per-pixel oracle") {
  for (int s = 0; s < testing::kSeeds; ++s) {
    const TD x = random_tensor({3, 6, 8}, s);
    const TD wh = random_tensor({4, 3, 1, 1}, 40 + s), bh = random_tensor({4}, 60 + s);
    const auto out = wfd(x, WfdParams<double>{wh, bh, std::nullopt, std::nullopt});
    CHECK_FALSE(out.low.defined());
    REQUIRE(out.high.shape() == Shape{4, 3, 4});
    for (Index o = 0; o < 4; ++o)
      for (Index y = 0; y < 3; ++y)
        for (Index xx = 0; xx < 4; ++xx) {
          double acc = bh.data()[o];
          for (Index c = 0; c < 3; ++c) {
            const double p = x.at({c, 2 * y, 2 * xx}), q = x.at({c, 2 * y, 2 * xx + 1});
            const double r = x.at({c, 2 * y + 1, 2 * xx}), t = x.at({c, 2 * y + 1, 2 * xx + 1});
            const double lh = (-p + q - r + t) / 2, hl = (-p - q + r + t) / 2, hh = (p - q - r + t) / 2;
            acc += wh.data()[o * 3 + c] * (lh + hl + hh);
          }
          CHECK(out.high.at({o, y, xx}) == doctest::Approx(acc).epsilon(1e-12));
        }
  }
}

TEST_CASE("finite differences through the transform and the decomposer") {
  for (int s = 0; s < testing::kSeeds; ++s) {
    const double e1 = grad_check<double>(
        [](const auto& v) {
          const auto b = haar_dwt2d(v[0]);
          return sum(mul(square(b.lh), b.hl)) + sum(b.hh) + sum(square(haar_idwt2d(b)));
        },
        {random_tensor({2, 4, 6}, s)}, testing::kFdStep);
    CHECK(e1 < testing::kFdTol);
    const double e2 = grad_check<double>(
        [](const auto& v) {
          WfdParams<double> p{v[1], v[2], v[3], v[2]};
          const auto out = wfd(v[0], p);
          return sum(square(out.high)) + sum(mul(out.low, out.low));
        },
        {random_tensor({2, 4, 4}, s), random_tensor({2, 2, 1, 1}, 10 + s), random_tensor({2}, 20 + s),
         random_tensor({2, 2, 1, 1}, 30 + s)},
        testing::kFdStep);
    CHECK(e2 < testing::kFdTol);
  }
}
