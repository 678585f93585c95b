#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "advrep/gradcheck.hpp"
#include "advrep/ops.hpp"
#include "advrep/rng.hpp"
#include "advrep/verify.hpp"

using namespace advrep;

TEST_CASE("nothing is recorded without requires_grad") {
  Tape<double> tape;
  TensorT<double> x(std::vector<size_t>{1, 1, 4, 4});
  TensorT<double> w(std::vector<size_t>{2, 1, 3, 3});
  TensorT<double> b(std::vector<size_t>{2});
  conv2d(tape, x, w, b, 1);
  maxpool2d(tape, x);
  leaky_relu(tape, x);
  CHECK(tape.size() == 0);
}

TEST_CASE("requires_grad propagates through ops") {
  Tape<double> tape;
  TensorT<double> x(std::vector<size_t>{1, 1, 4, 4}, true);
  TensorT<double> y = maxpool2d(tape, x);
  CHECK(y.requires_grad());
  CHECK(tape.size() == 1);
  TensorT<double> z = leaky_relu(tape, y);
  CHECK(z.requires_grad());
  CHECK(tape.size() == 2);
}

TEST_CASE("mse gradient is 2(a-b)/n") {
  Tape<double> tape;
  TensorT<double> a(std::vector<size_t>{3}, true);
  TensorT<double> b(std::vector<size_t>{3});
  a.data()[0] = 1;
  a.data()[1] = -2;
  a.data()[2] = 0.5;
  b.data()[0] = 0;
  b.data()[1] = 1;
  b.data()[2] = 0.5;
  TensorT<double> l = mse_loss(tape, a, b);
  tape.backward(l);
  CHECK(a.grad()[0] == doctest::Approx(2.0 * 1.0 / 3.0));
  CHECK(a.grad()[1] == doctest::Approx(2.0 * -3.0 / 3.0));
  CHECK(a.grad()[2] == doctest::Approx(0.0));
}

TEST_CASE("cross-entropy gradient is (p - onehot)/N") {
  Tape<double> tape;
  TensorT<double> logits(std::vector<size_t>{2, 3}, true);
  for (size_t i = 0; i < 6; ++i) logits.data()[i] = 0.1 * (double)i;
  const std::vector<int> labels = {2, 0};
  auto out = softmax_cross_entropy(tape, logits, labels);
  tape.backward(out.loss);
  for (size_t n = 0; n < 2; ++n)
    for (size_t k = 0; k < 3; ++k) {
      const double p = out.probs[n * 3 + k];
      const double onehot = (static_cast<int>(k) == labels[n]) ? 1.0 : 0.0;
      CHECK(logits.grad()[n * 3 + k] ==
            doctest::Approx((p - onehot) / 2.0).epsilon(1e-10));
    }
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  Tape<double> tape;
  TensorT<double> x(std::vector<size_t>{2}, true);
  x.data()[0] = 3;
  x.data()[1] = 4;
  // loss = sum(x) + sum(x): dx must be 2 everywhere
  TensorT<double> s1 = sum_all(tape, x);
  TensorT<double> s2 = sum_all(tape, x);
  TensorT<double> l = weighted_sum(tape, {{1.0, s1}, {1.0, s2}});
  tape.backward(l);
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 2.0);
}

TEST_CASE("backward requires a scalar loss that requires grad") {
  Tape<double> tape;
  TensorT<double> v(std::vector<size_t>{3}, true);
  CHECK_THROWS_AS(tape.backward(v), InternalError);
  TensorT<double> s = TensorT<double>::scalar(1.0, false);
  CHECK_THROWS_AS(tape.backward(s), InternalError);
}

TEST_CASE("central differences confirm a composite graph") {
  Rng rng(41);
  TensorT<double> x(std::vector<size_t>{2, 1, 6, 6}, true);
  TensorT<double> w(std::vector<size_t>{2, 1, 3, 3}, true);
  TensorT<double> b(std::vector<size_t>{2}, true);
  TensorT<double> target(std::vector<size_t>{2, 2, 3, 3});
  for (size_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.normal();
  for (size_t i = 0; i < w.numel(); ++i) w.data()[i] = 0.5 * rng.normal();
  for (size_t i = 0; i < b.numel(); ++i) b.data()[i] = 0.1 * rng.normal();
  for (size_t i = 0; i < target.numel(); ++i) target.data()[i] = rng.normal();

  auto build = [&](Tape<double>& tape) {
    TensorT<double> c = conv2d(tape, x, w, b, 1);
    TensorT<double> p = maxpool2d(tape, c);
    TensorT<double> r = leaky_relu(tape, p, 0.01);
    return mse_loss(tape, r, target);
  };
  Tape<double> tape;
  TensorT<double> loss = build(tape);
  tape.backward(loss);
  const std::vector<double> wg = w.grad_values();
  const std::vector<double> xg = x.grad_values();
  tape.clear();

  auto loss_fn = [&]() {
    Tape<double> fresh;
    const double v = build(fresh).data()[0];
    fresh.clear();
    return v;
  };
  auto rw = gradcheck(w, std::function<double()>(loss_fn), wg, 1e-6, 18, rng);
  CHECK(rw.max_rel_err < 1e-7);
  auto rx = gradcheck(x, std::function<double()>(loss_fn), xg, 1e-6, 18, rng);
  CHECK(rx.max_rel_err < 1e-7);
}

TEST_CASE("the full verification suite passes at reduced size") {
  const VerifyReport r = run_numeric_verification(5, 24, 10);
  for (const auto& line : r.lines) MESSAGE(line);
  CHECK(r.gradcheck_trials == 24);
  CHECK(r.adjoint_cases == 10);
  CHECK(r.max_rel_err < 1e-4);
  CHECK(r.adjoint_worst < 1e-10);
  CHECK(r.pass);
}
