#include <doctest.h>

#include <cmath>

#include "hlgt/gradcheck.hpp"
#include "hlgt/ops.hpp"
#include "hlgt/rng.hpp"
#include "hlgt/tensor.hpp"

using namespace hlgt;

namespace {

TensorD rand_d(int64_t r, int64_t c, Rng& rng, bool rg = true) {
  TensorD t(r, c, 0.0, rg);
  for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("matmul identity is bitwise exact") {
  auto x = Tensor::from(2, 2, {1, 2, 3, 4});
  auto i = Tensor::identity(2);
  auto y = matmul(i, x);
  for (int64_t k = 0; k < 4; ++k)
    CHECK(y.values()[k] == x.values()[k]);
}

TEST_CASE("matmul hand case") {
  auto a = Tensor::from(2, 2, {1, 2, 3, 4});
  auto b = Tensor::from(2, 2, {0, 1, 1, 0});
  auto c = matmul(a, b);
  CHECK(c.at(0, 0) == doctest::Approx(2));
  CHECK(c.at(0, 1) == doctest::Approx(1));
  CHECK(c.at(1, 0) == doctest::Approx(4));
  CHECK(c.at(1, 1) == doctest::Approx(3));
}

TEST_CASE("matmul shape mismatch reports both shapes") {
  auto a = Tensor(2, 3);
  auto b = Tensor(2, 3);
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("softmax rows: symmetry, closed form, extreme input") {
  auto sym = softmax_rows(Tensor::from(1, 2, {0, 0}));
  CHECK(sym.at(0, 0) == doctest::Approx(0.5));
  CHECK(sym.at(0, 1) == doctest::Approx(0.5));

  auto ln2 = softmax_rows(Tensor::from(1, 2, {std::log(2.0f), 0.0f}));
  CHECK(ln2.at(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
  CHECK(ln2.at(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

  // extended-precision oracle: exp(-1000)/(1 + exp(-1000)) in long double
  const long double tiny = std::exp(-1000.0L);
  const long double w1 = tiny / (1.0L + tiny);
  auto hot = softmax_rows(Tensor::from(1, 2, {1000.0f, 0.0f}));
  CHECK(std::isfinite(hot.at(0, 0)));
  CHECK(hot.at(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(hot.at(0, 1) == doctest::Approx(static_cast<double>(w1)).epsilon(1e-6));
}

TEST_CASE("softmax rejects NaN input") {
  auto x = Tensor::from(1, 2, {std::nanf(""), 0.0f});
  CHECK_THROWS_AS(softmax_rows(x), NumericError);
}

TEST_CASE("softmax rows sum to one over random matrices") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t m = 1 + static_cast<int64_t>(rng.below(6));
    const int64_t n = 1 + static_cast<int64_t>(rng.below(8));
    Tensor x(m, n);
    for (auto& v : x.values()) v = static_cast<float>(rng.uniform(-30.0, 30.0));
    auto y = softmax_rows(x);
    for (int64_t r = 0; r < m; ++r) {
      double s = 0;
      for (int64_t c = 0; c < n; ++c) s += y.at(r, c);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("masked softmax zeroes invalid columns and renormalizes") {
  auto x = Tensor::from(1, 3, {5.0f, 5.0f, 50.0f});
  auto y = softmax_rows_masked(x, {1, 1, 0});
  CHECK(y.at(0, 2) == 0.0f);
  CHECK(y.at(0, 0) == doctest::Approx(0.5));
  CHECK(y.at(0, 1) == doctest::Approx(0.5));
  CHECK_THROWS_AS(softmax_rows_masked(x, {0, 0, 0}), ShapeError);
}

TEST_CASE("elementwise trivia and the gelu reference oracle") {
  CHECK(gelu(Tensor::scalar(0)).item() == doctest::Approx(0.0));
  CHECK(hlgt::tanh(Tensor::scalar(0)).item() == doctest::Approx(0.0));
  // reference: 0.5*x*(1 + erf(x/sqrt(2))) evaluated in double
  const double oracle = 0.5 * 1.0 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
  CHECK(oracle == doctest::Approx(0.8413447461).epsilon(1e-9));
  CHECK(gelu(Tensor::scalar(1)).item() == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("concat_cols shapes and contract") {
  auto joined = concat_cols(Tensor::from(1, 1, {1}), Tensor::from(1, 1, {2}));
  CHECK(joined.rows() == 1);
  CHECK(joined.cols() == 2);
  CHECK(joined.at(0, 0) == 1.0f);
  CHECK(joined.at(0, 1) == 2.0f);

  auto wide = concat_cols(Tensor(2, 3), Tensor(2, 5));
  CHECK(wide.rows() == 2);
  CHECK(wide.cols() == 8);

  CHECK_THROWS_AS(concat_cols(Tensor(2, 3), Tensor(3, 3)), ShapeError);
}

TEST_CASE("backward: sum gives ones, quadratic gives 2x") {
  {
    Tape tape;
    auto scope = tape.activate();
    auto x = Tensor::from(1, 3, {1, 2, 3}, true);
    auto loss = sum(x);
    tape.backward(loss);
    for (float g : x.grad()) CHECK(g == doctest::Approx(1.0));
  }
  {
    Tape tape;
    auto scope = tape.activate();
    auto x = Tensor::scalar(3.0f, true);
    auto loss = sum(mul(x, x));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0));
  }
}

TEST_CASE("backward misuse: double call, non-scalar, detached") {
  Tape tape;
  auto scope = tape.activate();
  auto x = Tensor::from(1, 2, {1, 2}, true);
  auto loss = sum(x);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), TapeError);

  Tape tape2;
  auto scope2 = tape2.activate();
  auto y = mul(x, x);
  CHECK_THROWS_AS(tape2.backward(y), TapeError);  // non-scalar

  Tape tape3;
  auto scope3 = tape3.activate();
  auto detached = Tensor::scalar(1.0f, true);  // no producing op on this tape
  CHECK_THROWS_AS(tape3.backward(detached), TapeError);
}

TEST_CASE("gradients accumulate across reuse and zero_grad resets") {
  Tape tape;
  auto scope = tape.activate();
  auto x = Tensor::scalar(2.0f, true);
  auto loss = add(sum(mul(x, x)), sum(x));  // d/dx = 2x + 1 = 5
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(5.0));
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0f);
}

TEST_CASE("backward is linear in the loss") {
  const float a = 3.7f;
  std::vector<float> g1, g2;
  for (int pass = 0; pass < 2; ++pass) {
    Tape tape;
    auto scope = tape.activate();
    auto x = Tensor::from(2, 2, {0.3f, -1.2f, 0.8f, 2.0f}, true);
    auto base = sum(mul(softmax_rows(x), x));
    auto loss = pass == 0 ? base : scale(base, a);
    tape.backward(loss);
    (pass == 0 ? g1 : g2) = x.grad();
  }
  for (size_t i = 0; i < g1.size(); ++i)
    CHECK(g2[i] == doctest::Approx(a * g1[i]).epsilon(1e-6));
}

TEST_CASE("softmax-then-pick composite matches finite differences") {
  Rng rng(7);
  auto x = rand_d(2, 3, rng);
  x.set_name("x");
  auto f = [=] {
    auto y = softmax_rows(x);
    return sum(mul(slice(y, 0, 1, 1, 1), slice(y, 1, 1, 2, 1)));
  };
  auto report = grad_check(f, {x}, 1e-4, 1e-5);
  CHECK(report.pass);
}

TEST_CASE("randomized op compositions match finite differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = rand_d(3, 4, rng);
    auto b = rand_d(4, 3, rng);
    auto c = rand_d(3, 3, rng);
    auto f = [=] {
      auto h = gelu(matmul(a, b));
      auto s = softmax_rows(add(h, c));
      auto t = hlgt::tanh(matmul(s, transpose(c)));
      return mean(mul(t, t));
    };
    auto report = grad_check(f, {a, b, c}, 1e-4, 1e-4);
    CHECK_MESSAGE(report.pass, report.to_string());
  }
}

TEST_CASE("grad_check is exact for quadratics") {
  auto x = TensorD::scalar(3.0, true);
  auto f = [=] { return mul(x, x); };
  auto report = grad_check(f, {x}, 1e-4, 1e-9);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-9);
}

TEST_CASE("grad_check flags a wrong gradient rule by name") {
  auto x = TensorD::scalar(1.5, true);
  x.set_name("broken_param");
  // forward x*x, recorded rule pretends d/dx = 5x
  auto f = [=]() -> TensorD {
    TensorD out = TensorD::scalar(x.item() * x.item());
    if (auto* tape = TapeD::current()) {
      out.set_requires_grad(true);
      tape->mark_output(out);
      TensorD xc = x, oc = out;
      tape->record("bad_square", [xc, oc]() mutable {
        if (!oc.has_grad()) return;
        xc.grad()[0] += 5.0 * xc.item() * oc.grad()[0];
      });
    }
    return out;
  };
  auto report = grad_check(f, {x}, 1e-4, 1e-4);
  CHECK_FALSE(report.pass);
  REQUIRE(report.entries.size() == 1);
  CHECK(report.entries[0].param == "broken_param");
  CHECK_FALSE(report.entries[0].pass);
}

TEST_CASE("grad_check rejects a nondeterministic function") {
  Rng shared(5);
  auto rng = std::make_shared<Rng>(5);
  auto x = TensorD::scalar(1.0, true);
  auto f = [=] { return TensorD::scalar(x.item() + rng->uniform()); };
  CHECK_THROWS_AS(grad_check(f, {x}, 1e-4, 1e-4), NumericError);
}

TEST_CASE("ops reject non-finite results") {
  auto big = Tensor::scalar(1e38f);
  CHECK_THROWS_AS(mul(big, big), NumericError);
  auto x = Tensor::scalar(200.0f);
  CHECK_THROWS_AS(hlgt::exp(x), NumericError);
}

TEST_CASE("no tape means no recording") {
  auto x = Tensor::scalar(2.0f, true);
  auto y = mul(x, x);  // outside any tape scope
  CHECK(y.item() == doctest::Approx(4.0));
  Tape tape;
  CHECK(tape.node_count() == 0);
}

TEST_CASE("untracked inputs record nothing") {
  Tape tape;
  auto scope = tape.activate();
  auto a = Tensor::scalar(2.0f);
  auto b = Tensor::scalar(3.0f);
  auto c = mul(a, b);
  CHECK(c.item() == doctest::Approx(6.0));
  CHECK(tape.node_count() == 0);
  CHECK_FALSE(c.requires_grad());
}

TEST_CASE("tensor invariants: shape/data length and grad shape") {
  CHECK_THROWS_AS(Tensor::from(2, 2, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor(0, 3), ShapeError);
  auto t = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6}, true);
  CHECK(t.grad().size() == t.values().size());
}
