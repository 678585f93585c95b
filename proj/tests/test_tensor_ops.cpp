#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "advrep/ops.hpp"
#include "advrep/ref_kernels.hpp"
#include "advrep/rng.hpp"

using namespace advrep;

namespace {

TensorT<double> randn(const std::vector<size_t>& shape, Rng& rng,
                      bool requires_grad = false) {
  TensorT<double> t(shape, requires_grad);
  for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal();
  return t;
}

double max_abs_diff(const TensorT<double>& a, const std::vector<double>& b) {
  REQUIRE(a.numel() == b.size());
  double m = 0;
  for (size_t i = 0; i < b.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d all-ones box kernel") {
  Tape<double> tape;
  TensorT<double> x(std::vector<size_t>{1, 1, 3, 3});
  TensorT<double> w(std::vector<size_t>{1, 1, 3, 3});
  TensorT<double> b(std::vector<size_t>{1});
  for (size_t i = 0; i < 9; ++i) x.data()[i] = 1.0;
  for (size_t i = 0; i < 9; ++i) w.data()[i] = 1.0;
  TensorT<double> y = conv2d(tape, x, w, b, 1);
  REQUIRE(y.shape() == std::vector<size_t>{1, 1, 3, 3});
  const std::vector<double> want = {4, 6, 4, 6, 9, 6, 4, 6, 4};
  CHECK(max_abs_diff(y, want) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("conv2d matches the direct reference") {
  Rng rng(21);
  for (size_t pad : {size_t(0), size_t(1)}) {
    Tape<double> tape;
    TensorT<double> x = randn({2, 3, 7, 6}, rng);
    TensorT<double> w = randn({4, 3, 3, 3}, rng);
    TensorT<double> b = randn({4}, rng);
    TensorT<double> y = conv2d(tape, x, w, b, pad);
    std::vector<double> want(y.numel());
    ref::conv2d(2, 3, 7, 6, 4, 3, 3, pad, x.data(), w.data(), b.data(),
                want.data());
    CHECK(max_abs_diff(y, want) < 1e-12);
  }
}

TEST_CASE("conv_transpose2d matches the direct adjoint") {
  Rng rng(22);
  for (size_t pad : {size_t(0), size_t(1)}) {
    Tape<double> tape;
    TensorT<double> x = randn({2, 4, 5, 6}, rng);
    TensorT<double> w = randn({4, 3, 3, 3}, rng);
    TensorT<double> b = randn({3}, rng);
    TensorT<double> y = conv_transpose2d(tape, x, w, b, pad);
    REQUIRE(y.dim(2) == 5 + 2 - 2 * pad);
    std::vector<double> want(y.numel());
    ref::conv_transpose2d(2, 4, 5, 6, 3, 3, 3, pad, x.data(), w.data(),
                          b.data(), want.data());
    CHECK(max_abs_diff(y, want) < 1e-12);
  }
}

TEST_CASE("conv and conv_transpose are adjoint") {
  Rng rng(23);
  Tape<double> tape;
  TensorT<double> x = randn({1, 2, 6, 5}, rng);
  TensorT<double> w = randn({3, 2, 3, 3}, rng);
  TensorT<double> zb_f(std::vector<size_t>{3}), zb_c(std::vector<size_t>{2});
  TensorT<double> y = conv2d(tape, x, w, zb_f, 1);
  TensorT<double> v = randn(y.shape(), rng);
  TensorT<double> u = conv_transpose2d(tape, v, w, zb_c, 1);
  long double lhs = 0, rhs = 0;
  for (size_t i = 0; i < y.numel(); ++i)
    lhs += static_cast<long double>(y.data()[i]) * v.data()[i];
  for (size_t i = 0; i < x.numel(); ++i)
    rhs += static_cast<long double>(x.data()[i]) * u.data()[i];
  CHECK(std::abs(static_cast<double>(lhs - rhs)) < 1e-10);
}

TEST_CASE("maxpool picks window maxima, first on ties") {
  Tape<double> tape;
  TensorT<double> x(std::vector<size_t>{1, 1, 2, 4}, true);
  const std::vector<double> vals = {1, 3, 5, 5, 2, 0, 5, 4};
  std::copy(vals.begin(), vals.end(), x.data());
  TensorT<double> y = maxpool2d(tape, x);
  REQUIRE(y.shape() == std::vector<size_t>{1, 1, 1, 2});
  CHECK(y.data()[0] == 3.0);
  CHECK(y.data()[1] == 5.0);

  // Tie in the second window: position (0,2) row-major comes first, so its
  // slot gets the gradient.
  TensorT<double> loss = sum_all(tape, y);
  tape.backward(loss);
  CHECK(x.grad()[2] == 1.0);
  CHECK(x.grad()[3] == 0.0);
  CHECK(x.grad()[6] == 0.0);
}

TEST_CASE("maxpool matches the reference on odd sizes") {
  Rng rng(24);
  Tape<double> tape;
  TensorT<double> x = randn({2, 3, 7, 5}, rng);
  TensorT<double> y = maxpool2d(tape, x);
  REQUIRE(y.shape() == std::vector<size_t>{2, 3, 3, 2});
  std::vector<double> want(y.numel());
  ref::maxpool2d(2, 3, 7, 5, x.data(), want.data());
  CHECK(max_abs_diff(y, want) == 0.0);
}

TEST_CASE("batchnorm train mode normalizes per channel") {
  Rng rng(25);
  Tape<double> tape;
  TensorT<double> x = randn({4, 2, 3, 3}, rng);
  TensorT<double> gamma(std::vector<size_t>{2});
  TensorT<double> beta(std::vector<size_t>{2});
  TensorT<double> rm(std::vector<size_t>{2}), rv(std::vector<size_t>{2});
  gamma.data()[0] = gamma.data()[1] = 1.0;
  rv.data()[0] = rv.data()[1] = 1.0;
  TensorT<double> y = batchnorm2d(tape, x, gamma, beta, rm, rv,
                                  BnMode::kTrain, false);
  for (size_t c = 0; c < 2; ++c) {
    double sum = 0, sq = 0;
    size_t n = 0;
    for (size_t b = 0; b < 4; ++b)
      for (size_t i = 0; i < 9; ++i) {
        const double v = y.data()[(b * 2 + c) * 9 + i];
        sum += v;
        sq += v * v;
        ++n;
      }
    const double mean = sum / n;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(sq / n - mean * mean == doctest::Approx(1.0).epsilon(1e-3));
  }
  // update_running false leaves the running stats alone
  CHECK(rm.data()[0] == 0.0);
  CHECK(rv.data()[0] == 1.0);
}

TEST_CASE("batchnorm running stats follow the momentum rule") {
  Rng rng(26);
  Tape<double> tape;
  TensorT<double> x = randn({8, 1, 4, 4}, rng);
  TensorT<double> gamma(std::vector<size_t>{1});
  TensorT<double> beta(std::vector<size_t>{1});
  TensorT<double> rm(std::vector<size_t>{1}), rv(std::vector<size_t>{1});
  gamma.data()[0] = 1.0;
  rm.data()[0] = 0.5;
  rv.data()[0] = 2.0;

  double bm = 0, bv = 0;
  for (size_t i = 0; i < x.numel(); ++i) bm += x.data()[i];
  bm /= static_cast<double>(x.numel());
  for (size_t i = 0; i < x.numel(); ++i) {
    const double d = x.data()[i] - bm;
    bv += d * d;
  }
  bv /= static_cast<double>(x.numel());  // biased

  batchnorm2d(tape, x, gamma, beta, rm, rv, BnMode::kTrain, true);
  CHECK(rm.data()[0] == doctest::Approx(0.9 * 0.5 + 0.1 * bm).epsilon(1e-12));
  CHECK(rv.data()[0] == doctest::Approx(0.9 * 2.0 + 0.1 * bv).epsilon(1e-12));
}

TEST_CASE("batchnorm eval mode matches the reference with given stats") {
  Rng rng(27);
  Tape<double> tape;
  TensorT<double> x = randn({3, 2, 2, 2}, rng);
  TensorT<double> gamma = randn({2}, rng);
  TensorT<double> beta = randn({2}, rng);
  TensorT<double> rm = randn({2}, rng);
  TensorT<double> rv(std::vector<size_t>{2});
  rv.data()[0] = 1.3;
  rv.data()[1] = 0.4;
  TensorT<double> y =
      batchnorm2d(tape, x, gamma, beta, rm, rv, BnMode::kEval, false);
  std::vector<double> want(y.numel());
  ref::batchnorm2d(3, 2, 2, 2, x.data(), gamma.data(), beta.data(), rm.data(),
                   rv.data(), 1e-5, want.data());
  CHECK(max_abs_diff(y, want) < 1e-12);
}

TEST_CASE("leaky relu applies the negative slope") {
  Tape<double> tape;
  TensorT<double> x(std::vector<size_t>{4});
  x.data()[0] = -2.0;
  x.data()[1] = -0.5;
  x.data()[2] = 0.0;
  x.data()[3] = 3.0;
  TensorT<double> y = leaky_relu(tape, x, 0.01);
  CHECK(y.data()[0] == doctest::Approx(-0.02));
  CHECK(y.data()[1] == doctest::Approx(-0.005));
  CHECK(y.data()[2] == 0.0);
  CHECK(y.data()[3] == 3.0);
}

TEST_CASE("nearest interpolation uses floor index mapping") {
  Tape<double> tape;
  TensorT<double> x(std::vector<size_t>{1, 1, 2, 2});
  x.data()[0] = 1;
  x.data()[1] = 2;
  x.data()[2] = 3;
  x.data()[3] = 4;
  TensorT<double> y = interpolate_nearest(tape, x, 4, 4);
  const std::vector<double> want = {1, 1, 2, 2, 1, 1, 2, 2,
                                    3, 3, 4, 4, 3, 3, 4, 4};
  CHECK(max_abs_diff(y, want) == 0.0);

  Rng rng(28);
  TensorT<double> z = randn({2, 3, 3, 4}, rng);
  TensorT<double> up = interpolate_nearest(tape, z, 7, 5);
  std::vector<double> ref_out(up.numel());
  ref::interpolate_nearest(2, 3, 3, 4, 7, 5, z.data(), ref_out.data());
  CHECK(max_abs_diff(up, ref_out) == 0.0);
}

TEST_CASE("linear matches the reference matmul") {
  Rng rng(29);
  Tape<double> tape;
  TensorT<double> x = randn({3, 5}, rng);
  TensorT<double> w = randn({4, 5}, rng);
  TensorT<double> b = randn({4}, rng);
  TensorT<double> y = linear(tape, x, w, b);
  for (size_t n = 0; n < 3; ++n)
    for (size_t o = 0; o < 4; ++o) {
      double acc = b.data()[o];
      for (size_t i = 0; i < 5; ++i)
        acc += x.data()[n * 5 + i] * w.data()[o * 5 + i];
      CHECK(y.data()[n * 4 + o] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("dropout is inverted and off-paths share storage") {
  Rng rng(30);
  Tape<double> tape;
  TensorT<double> x(std::vector<size_t>{1000});
  for (size_t i = 0; i < 1000; ++i) x.data()[i] = 1.0;

  Rng mask(77);
  TensorT<double> inactive = dropout(tape, x, 0.4, mask, false);
  CHECK(inactive.same_storage(x));
  TensorT<double> p0 = dropout(tape, x, 0.0, mask, true);
  CHECK(p0.same_storage(x));

  TensorT<double> y = dropout(tape, x, 0.4, mask, true);
  size_t kept = 0;
  for (size_t i = 0; i < 1000; ++i) {
    if (y.data()[i] != 0.0) {
      CHECK(y.data()[i] == doctest::Approx(1.0 / 0.6).epsilon(1e-12));
      ++kept;
    }
  }
  CHECK(kept > 520);
  CHECK(kept < 680);

  Rng mask2(77);
  TensorT<double> y2 = dropout(tape, x, 0.4, mask2, true);
  CHECK(max_abs_diff(y, std::vector<double>(y2.data(), y2.data() + 1000)) ==
        0.0);
}

TEST_CASE("mse is the mean of squared differences") {
  Tape<double> tape;
  TensorT<double> a(std::vector<size_t>{4});
  TensorT<double> b(std::vector<size_t>{4});
  a.data()[0] = 1;
  a.data()[1] = 2;
  a.data()[2] = 3;
  a.data()[3] = 4;
  b.data()[0] = 1;
  b.data()[1] = 0;
  b.data()[2] = 3;
  b.data()[3] = 8;
  TensorT<double> l = mse_loss(tape, a, b);
  CHECK(l.data()[0] == doctest::Approx((4.0 + 16.0) / 4.0));
}

TEST_CASE("softmax cross entropy matches a long-double oracle") {
  Rng rng(31);
  Tape<float> tape;
  TensorT<float> logits(std::vector<size_t>{5, 3});
  for (size_t i = 0; i < logits.numel(); ++i)
    logits.data()[i] = static_cast<float>(rng.normal());
  const std::vector<int> labels = {0, 2, 1, 1, 0};
  auto out = softmax_cross_entropy(tape, logits, labels);
  const long double want =
      ref::cross_entropy(logits.data(), labels.data(), 5, 3);
  CHECK(out.loss.data()[0] ==
        doctest::Approx(static_cast<double>(want)).epsilon(1e-5));
  // probability rows sum to one
  for (size_t n = 0; n < 5; ++n) {
    float s = 0;
    for (size_t k = 0; k < 3; ++k) s += out.probs[n * 3 + k];
    CHECK(s == doctest::Approx(1.0f).epsilon(1e-5));
  }
}

TEST_CASE("weighted_sum skips zero-weight terms entirely") {
  Tape<double> tape;
  TensorT<double> a = TensorT<double>::scalar(2.0, true);
  TensorT<double> b = TensorT<double>::scalar(10.0, true);
  const size_t before = tape.size();
  TensorT<double> s =
      weighted_sum(tape, {{0.5, a}, {0.0, b}, {-0.25, a}});
  CHECK(s.data()[0] == doctest::Approx(0.5 * 2.0 - 0.25 * 2.0));
  tape.backward(s);
  CHECK(a.grad()[0] == doctest::Approx(0.25));
  CHECK_FALSE(b.has_grad());
  CHECK(tape.size() == before + 1);
}

TEST_CASE("reshape keeps values and routes gradients") {
  Tape<double> tape;
  TensorT<double> x(std::vector<size_t>{2, 3}, true);
  for (size_t i = 0; i < 6; ++i) x.data()[i] = static_cast<double>(i);
  TensorT<double> y = reshape(tape, x, {3, 2});
  REQUIRE(y.shape() == std::vector<size_t>{3, 2});
  for (size_t i = 0; i < 6; ++i) CHECK(y.data()[i] == static_cast<double>(i));
  TensorT<double> l = sum_all(tape, y);
  tape.backward(l);
  for (size_t i = 0; i < 6; ++i) CHECK(x.grad()[i] == 1.0);
}

TEST_CASE("float conv agrees with the double reference to float accuracy") {
  Rng rng(33);
  Tape<float> tape;
  TensorT<float> x(std::vector<size_t>{2, 2, 8, 8});
  TensorT<float> w(std::vector<size_t>{3, 2, 3, 3});
  TensorT<float> b(std::vector<size_t>{3});
  for (size_t i = 0; i < x.numel(); ++i)
    x.data()[i] = static_cast<float>(rng.normal());
  for (size_t i = 0; i < w.numel(); ++i)
    w.data()[i] = static_cast<float>(rng.normal());
  for (size_t i = 0; i < 3; ++i) b.data()[i] = static_cast<float>(rng.normal());
  TensorT<float> y = conv2d(tape, x, w, b, 1);

  std::vector<double> xd(x.data(), x.data() + x.numel());
  std::vector<double> wd(w.data(), w.data() + w.numel());
  std::vector<double> bd(b.data(), b.data() + 3);
  std::vector<double> want(y.numel());
  ref::conv2d(2, 2, 8, 8, 3, 3, 3, 1, xd.data(), wd.data(), bd.data(),
              want.data());
  for (size_t i = 0; i < y.numel(); ++i)
    CHECK(static_cast<double>(y.data()[i]) ==
          doctest::Approx(want[i]).epsilon(1e-4));
}
