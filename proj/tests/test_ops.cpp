#include "doctest.h"

#include <cmath>
#include <numbers>

#include "hfnrv/grad_check.hpp"
#include "hfnrv/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hfnrv;
using hfnrv::testing::kFdStep;
using hfnrv::testing::kFdTol;
using hfnrv::testing::kSeeds;
using hfnrv::testing::random_tensor;
using TD = Tensor<double>;

namespace {

std::vector<double> as_vec(const TD& t) { return {t.data().begin(), t.data().end()}; }

void check_seeds(const char* what, Shape a, Shape b, const ScalarFn<double>& fn, double lo = -1, double hi = 1) {
  for (int s = 0; s < kSeeds; ++s) {
    std::vector<TD> in{random_tensor(a, 100 + s, lo, hi)};
    if (!b.empty()) in.push_back(random_tensor(b, 200 + s, lo, hi));
    const double err = grad_check<double>(fn, in, kFdStep);
    INFO(what << " seed " << s);
    CHECK(err < kFdTol);
  }
}

// Weighted sum so the upstream gradient is not uniform.
TD probe(const TD& y) {
  Vec<double> w(y.size());
  for (Index i = 0; i < w.size(); ++i) w[i] = std::sin(0.37 * static_cast<double>(i) + 0.1);
  return sum(mul(y, TD(y.shape(), w)));
}

}  // namespace

TEST_CASE("conv2d identity channel map") {
  const TD x = random_tensor({3, 8, 8}, 1);
  TD w = TD::zeros({3, 3, 1, 1});
  for (Index c = 0; c < 3; ++c) w.mutable_data()[c * 3 + c] = 1.0;
  const TD y = conv2d(x, w, TD::zeros({3}));
  CHECK(y.shape() == x.shape());
  CHECK(testing::max_abs_diff(x, y) == 0.0);
}

TEST_CASE("conv2d box filter corners against naive loop") {
  const TD x = TD::full({1, 4, 4}, 1.0);
  const TD w = TD::full({1, 1, 3, 3}, 1.0 / 9.0);
  const TD y = conv2d(x, w, TD::zeros({1}), 1, 1);
  const auto ref = oracle::conv2d(as_vec(x), 1, 4, 4, as_vec(w), 1, 3, {0.0}, 1, 1, false);
  for (Index i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-14));
  CHECK(y.at({0, 0, 0}) == doctest::Approx(4.0 / 9.0));
  CHECK(y.at({0, 3, 3}) == doctest::Approx(4.0 / 9.0));
  CHECK(y.at({0, 1, 2}) == doctest::Approx(1.0));
}

TEST_CASE("conv2d matches naive oracle on random inputs") {
  for (int s = 0; s < kSeeds; ++s) {
    const TD x = random_tensor({3, 7, 9}, s);
    const TD w = random_tensor({4, 3, 3, 3}, 50 + s);
    const TD b = random_tensor({4}, 90 + s);
    const TD y = conv2d(x, w, b, 2, 1);
    const auto ref = oracle::conv2d(as_vec(x), 3, 7, 9, as_vec(w), 4, 3, as_vec(b), 2, 1, false);
    REQUIRE(y.size() == static_cast<Index>(ref.size()));
    for (Index i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    const TD wd = random_tensor({3, 1, 3, 3}, 70 + s);
    const TD yd = conv2d(x, wd, TD(), 1, 1, 3);
    const auto refd = oracle::conv2d(as_vec(x), 3, 7, 9, as_vec(wd), 3, 3, {}, 1, 1, true);
    for (Index i = 0; i < yd.size(); ++i) CHECK(yd.data()[i] == doctest::Approx(refd[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d shapes and errors") {
  const TD y = conv2d(random_tensor({1, 8, 8}, 3), random_tensor({1, 1, 2, 2}, 4), TD(), 2, 0);
  CHECK(y.shape() == Shape{1, 4, 4});
  CHECK_THROWS_AS(conv2d(random_tensor({2, 8, 8}, 3), random_tensor({1, 3, 3, 3}, 4), TD()), InvalidArgument);
}

TEST_CASE("pixel_shuffle positional definition") {
  const TD x = TD::from({4, 1, 1}, {1, 2, 3, 4});
  const TD y = pixel_shuffle(x, 2);
  CHECK(y.shape() == Shape{1, 2, 2});
  CHECK(y.at({0, 0, 0}) == 1);
  CHECK(y.at({0, 0, 1}) == 2);
  CHECK(y.at({0, 1, 0}) == 3);
  CHECK(y.at({0, 1, 1}) == 4);
  const TD z = random_tensor({3, 4, 5}, 9);
  CHECK(testing::max_abs_diff(pixel_shuffle(z, 1), z) == 0.0);
  CHECK_THROWS_AS(pixel_shuffle(random_tensor({3, 2, 2}, 1), 2), InvalidArgument);
}

TEST_CASE("harmonic activation values") {
  auto h = [](double w1, double w2, double x) {
    return harmonic(TD::scalar(x), TD::scalar(w1), TD::scalar(w2)).item();
  };
  CHECK(h(1, 0, 0) == 0.0);
  CHECK(h(0, 1, 0) == 1.0);
  CHECK(h(1, 1, std::numbers::pi / 4) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("elementwise identities") {
  const TD x = random_tensor({2, 3, 4}, 5);
  CHECK(testing::max_abs_diff(add(x, TD::zeros(x.shape())), x) == 0.0);
  CHECK(gelu(TD::scalar(0.0)).item() == 0.0);
  CHECK_THROWS_AS(add(x, random_tensor({2, 4, 3}, 1)), InvalidArgument);
}

TEST_CASE("layer norm of [1, -1] with unit scale") {
  const TD x = TD::from({2, 1, 1}, {1, -1});
  const TD y = layer_norm_channels(x, TD::full({2}, 1.0), TD::zeros({2}));
  // mean 0, biased variance 1.
  const double expect = 1.0 / std::sqrt(1.0 + kLayerNormEps);
  CHECK(y.data()[0] == doctest::Approx(expect).epsilon(1e-15));
  CHECK(y.data()[1] == doctest::Approx(-expect).epsilon(1e-15));
}

TEST_CASE("backward of sum of squares") {
  const TD x = TD::from({3}, {1, 2, 3}, true);
  sum(square(x)).backward();
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
  CHECK(x.grad()[2] == 6.0);
}

TEST_CASE("backward on constant graph writes nothing") {
  const TD x = TD::from({3}, {1, 2, 3});
  const TD loss = sum(square(x));
  loss.backward();
  CHECK_FALSE(x.has_grad());
  CHECK_THROWS_AS(square(TD::from({2}, {1, 2}, true)).backward(), InvalidArgument);
}

TEST_CASE("non-finite results raise") {
  const TD x = TD::from({1}, {1e300});
  CHECK_THROWS_AS(square(x), NumericError);
}

TEST_CASE("grad_check of sum is exact") {
  // Integer inputs and a power-of-two step keep every difference exact.
  for (int s = 0; s < kSeeds; ++s) {
    Vec<double> v(12);
    for (Index i = 0; i < 12; ++i) v[i] = static_cast<double>((i * 7 + s) % 11) - 5.0;
    const double err = grad_check<double>([](const auto& in) { return sum(in[0]); },
                                          {TD({3, 4}, v)}, std::ldexp(1.0, -10));
    CHECK(err == 0.0);
  }
}

TEST_CASE("finite-difference checks, every op") {
  using V = const std::vector<TD>&;
  check_seeds("conv2d", {2, 5, 6}, {3, 2, 3, 3}, [](V v) {
    return probe(conv2d(v[0], v[1], TD(), 1, 1));
  });
  check_seeds("conv2d stride", {2, 6, 6}, {2, 2, 3, 3}, [](V v) {
    return probe(conv2d(v[0], v[1], TD::full({2}, 0.1), 2, 1));
  });
  check_seeds("conv2d depthwise", {3, 5, 5}, {3, 1, 3, 3}, [](V v) {
    return probe(conv2d(v[0], v[1], TD(), 1, 1, 3));
  });
  check_seeds("conv2d bias", {4}, {}, [](V v) {
    static const TD x = random_tensor({2, 4, 4}, 7), w = random_tensor({4, 2, 1, 1}, 8);
    return probe(conv2d(x, w, v[0]));
  });
  check_seeds("pixel_shuffle", {8, 2, 3}, {}, [](V v) { return probe(pixel_shuffle(v[0], 2)); });
  check_seeds("resize_bilinear", {2, 3, 4}, {}, [](V v) { return probe(resize_bilinear(v[0], 7, 5)); });
  check_seeds("replicate_pad", {2, 3, 5}, {}, [](V v) { return probe(replicate_pad_to_even(v[0])); });
  check_seeds("harmonic", {2, 3, 3}, {2}, [](V v) {
    return probe(harmonic(v[0], slice0(v[1], 0, 1), slice0(v[1], 1, 1)));
  });
  check_seeds("gelu", {3, 4}, {}, [](V v) { return probe(gelu(v[0])); }, -3, 3);
  check_seeds("sin", {3, 4}, {}, [](V v) { return probe(hfnrv::sin(v[0])); }, -3, 3);
  check_seeds("abs", {3, 4}, {}, [](V v) { return probe(hfnrv::abs(v[0])); }, 0.1, 1);
  check_seeds("square", {3, 4}, {}, [](V v) { return probe(square(v[0])); });
  check_seeds("add broadcast", {2, 3, 4}, {2, 1, 1}, [](V v) { return probe(add(v[0], v[1])); });
  check_seeds("sub broadcast", {2, 3, 4}, {1, 3, 1}, [](V v) { return probe(sub(v[0], v[1])); });
  check_seeds("mul broadcast", {2, 3, 4}, {1, 3, 4}, [](V v) { return probe(mul(v[0], v[1])); });
  check_seeds("scale", {5}, {}, [](V v) { return probe(scale(v[0], -2.5)); });
  check_seeds("add_scalar", {5}, {}, [](V v) { return probe(square(add_scalar(v[0], 0.3))); });
  check_seeds("mean", {4, 3}, {}, [](V v) { return square(mean(v[0])); });
  check_seeds("concat", {2, 3}, {1, 3}, [](V v) { return probe(concat<double>({v[0], v[1], v[0]})); });
  check_seeds("slice0", {4, 3}, {}, [](V v) { return probe(slice0(v[0], 1, 2)); });
  check_seeds("select0", {4, 3}, {}, [](V v) { return probe(select0(v[0], 2)); });
  check_seeds("reshape", {4, 3}, {}, [](V v) { return probe(reshape(v[0], {2, 6})); });
  check_seeds("stack", {2, 3}, {2, 3}, [](V v) { return probe(stack<double>({v[0], v[1]})); });
  check_seeds("matmul", {3, 4}, {4, 2}, [](V v) { return probe(matmul(v[0], v[1])); });
  check_seeds("transpose", {3, 4}, {}, [](V v) { return probe(transpose(v[0])); });
  check_seeds("softmax_rows", {3, 5}, {}, [](V v) { return probe(softmax_rows(v[0])); }, -2, 2);
  check_seeds("layer_norm", {4, 3, 3}, {8}, [](V v) {
    return probe(layer_norm_channels(v[0], slice0(v[1], 0, 4), slice0(v[1], 4, 4)));
  });
}

TEST_CASE("leaf gradients accumulate across backward calls") {
  const TD x = TD::from({2}, {1, 2}, true);
  sum(x).backward();
  sum(x).backward();
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 2.0);
}
