#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "support.hpp"
#include "openadapt/tensor.hpp"

using namespace openadapt;
using testsupport::random_tensor;

TEST_CASE("matmul examples") {
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor r = matmul(eye, m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r[i] == m[i]);

  const Tensor dotp = matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}));
  CHECK(dotp.shape() == Shape{1, 1});
  CHECK(dotp.item() == 11.0);
}

TEST_CASE("matmul shape error names both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({2, 3});
  try {
    (void)matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x3]", msg.find("[2x3]") + 1) != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches central differences") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_tensor({3, 4}, rng).set_requires_grad(true);
    Tensor b = random_tensor({4, 2}, rng).set_requires_grad(true);
    Tensor ps[] = {a, b};
    CHECK(finite_diff_check([&] { return sum(mul(matmul(a, b), matmul(a, b))); }, ps, 1e-5) <= 1e-6);
  }
}

TEST_CASE("softmax examples") {
  const Tensor u = softmax(Tensor::vector({0, 0, 0, 0}));
  for (std::size_t i = 0; i < 4; ++i) CHECK(u[i] == doctest::Approx(0.25).epsilon(1e-15));
  const Tensor p = softmax(Tensor::vector({std::log(1.0), std::log(3.0)}));
  CHECK(std::abs(p[0] - 0.25) <= 1e-15);
  CHECK(std::abs(p[1] - 0.75) <= 1e-15);
}

TEST_CASE("softmax properties on random logits") {
  Rng rng(3);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor z = random_tensor({3, 6}, rng, -30.0, 30.0);
    const Tensor p = softmax(z);
    const double c = shift(rng);
    const Tensor q = softmax(add(z, Tensor::full({1, 6}, c)));
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < 6; ++k) {
        CHECK(p.at(r, k) >= 0.0);
        CHECK(std::abs(p.at(r, k) - q.at(r, k)) <= 1e-12);
        s += p.at(r, k);
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
  // No overflow on huge logits.
  const Tensor big = softmax(Tensor::vector({1000.0, 999.0}));
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] > big[1]);
}

TEST_CASE("backward examples") {
  Tape tape;
  Tensor w = Tensor::vector({1, -2}).set_requires_grad(true);
  {
    auto scope = tape.record();
    const Tensor loss = sum(mul(w, w));
    tape.backward(loss);
  }
  CHECK(w.grad()[0] == 2.0);
  CHECK(w.grad()[1] == -4.0);

  // A loss that does not depend on w: zero gradients.
  Tape tape2;
  {
    auto scope = tape2.record();
    const Tensor loss = sub(sum(w), sum(w));
    tape2.backward(loss);
  }
  CHECK(w.grad()[0] == 0.0);
  CHECK(w.grad()[1] == 0.0);
}

TEST_CASE("backward rejects non-scalar and unrecorded losses") {
  Tape tape;
  Tensor w = Tensor::vector({1, 2}).set_requires_grad(true);
  auto scope = tape.record();
  const Tensor v = mul(w, w);
  CHECK_THROWS_AS(tape.backward(v), ShapeError);
  CHECK_THROWS_AS(tape.backward(Tensor::scalar(3.0)), std::logic_error);
  Tape other;
  CHECK_THROWS_AS(other.backward(sum(v)), std::logic_error);
}

TEST_CASE("shared subexpressions accumulate") {
  Tape tape;
  Tensor w = Tensor::vector({0.3, -1.1, 2.0}).set_requires_grad(true);
  {
    auto scope = tape.record();
    const Tensor f = sum(mul(w, w));
    tape.backward(add(f, f));
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(w.grad()[i] - 4.0 * w[i]) <= 1e-15);
}

TEST_CASE("operations outside a recording scope build no graph") {
  Tensor w = Tensor::vector({1, 2}).set_requires_grad(true);
  const Tensor v = mul(w, w);
  CHECK(v.is_leaf());
  CHECK_FALSE(v.requires_grad());
}

TEST_CASE("finite_diff_check examples") {
  Rng rng(5);
  Tensor w = random_tensor({5}, rng).set_requires_grad(true);
  Tensor ps[] = {w};
  CHECK(finite_diff_check([&] { return sum(w); }, ps, 1e-5) <= 1e-10);
  CHECK(finite_diff_check([&] { return sum(mul(w, w)); }, ps, 1e-5) <= 1e-7);
}

TEST_CASE("every primitive passes a finite-difference check") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_tensor({3, 4}, rng).set_requires_grad(true);
    Tensor b = random_tensor({3, 4}, rng).set_requires_grad(true);
    Tensor row = random_tensor({1, 4}, rng).set_requires_grad(true);
    Tensor pos = random_tensor({3, 4}, rng, 0.5, 2.0).set_requires_grad(true);
    Tensor weights = random_tensor({3, 4}, rng);  // fixed, breaks symmetry of sums
    auto weighted = [&](const Tensor& t) { return sum(mul(t, weights)); };
    Tensor pa[] = {a};
    Tensor pab[] = {a, b};
    Tensor par[] = {a, row};
    Tensor pp[] = {pos};
    CHECK(finite_diff_check([&] { return weighted(transpose(transpose(a))); }, pa, 1e-5) <= 1e-7);
    CHECK(finite_diff_check([&] { return sum(mul(transpose(a), transpose(weights))); }, pa, 1e-5) <= 1e-7);
    CHECK(finite_diff_check([&] { return weighted(add(a, row)); }, par, 1e-5) <= 1e-7);
    CHECK(finite_diff_check([&] { return weighted(add(a, b)); }, pab, 1e-5) <= 1e-7);
    CHECK(finite_diff_check([&] { return weighted(sub(a, b)); }, pab, 1e-5) <= 1e-7);
    CHECK(finite_diff_check([&] { return weighted(mul(a, b)); }, pab, 1e-5) <= 1e-7);
    CHECK(finite_diff_check([&] { return weighted(scale(a, -2.5)); }, pa, 1e-5) <= 1e-7);
    CHECK(finite_diff_check([&] { return weighted(relu(a)); }, pa, 1e-5) <= 1e-6);
    CHECK(finite_diff_check([&] { return weighted(softmax(a)); }, pa, 1e-5) <= 1e-7);
    CHECK(finite_diff_check([&] { return weighted(log(pos)); }, pp, 1e-5) <= 1e-7);
    CHECK(finite_diff_check([&] { return weighted(pow(pos, 0.7)); }, pp, 1e-5) <= 1e-7);
    CHECK(finite_diff_check([&] { return mean(mul(a, weights)); }, pa, 1e-5) <= 1e-7);
    CHECK(finite_diff_check([&] { return dot(a, b); }, pab, 1e-5) <= 1e-7);
    CHECK(finite_diff_check([&] { return frobenius_norm(a); }, pa, 1e-5) <= 1e-7);
  }
}

TEST_CASE("log clamps and has zero slope inside the clamp") {
  Tape tape;
  Tensor w = Tensor::vector({0.0, 1e-20, 2.0}).set_requires_grad(true);
  {
    auto scope = tape.record();
    const Tensor l = log(w);
    CHECK(l[0] == std::log(kLogClamp));
    CHECK(l[1] == std::log(kLogClamp));
    tape.backward(sum(l));
  }
  CHECK(w.grad()[0] == 0.0);
  CHECK(w.grad()[1] == 0.0);
  CHECK(w.grad()[2] == doctest::Approx(0.5));
}

TEST_CASE("frobenius_norm subgradient at the origin is zero") {
  Tape tape;
  Tensor w = Tensor::zeros({2, 2}).set_requires_grad(true);
  {
    auto scope = tape.record();
    tape.backward(frobenius_norm(w));
  }
  for (double g : w.grad()) CHECK(g == 0.0);
}
