#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "slu/gradcheck.hpp"
#include "slu/rng.hpp"
#include "slu/tensor.hpp"

using namespace slu;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (real& x : t.data) x = static_cast<real>(rng.uniform(-1.0, 1.0));
  return t;
}

// Gradient-check a loss built from a single parameter tensor.
void check_unary(const std::function<Var(Graph&, Tensor*)>& build, Tensor& p,
                 double tolerance = 1e-6) {
  auto loss = [&](Graph& g) { return build(g, &p); };
  GradCheckReport rep = gradient_check(loss, {{"p", &p}},
                                       {.step = 1e-6, .tolerance = tolerance});
  CAPTURE(rep.summary());
  CHECK(rep.passed);
}

}  // namespace

TEST_CASE("forward value oracles") {
  Graph g;
  SUBCASE("matmul matrix-matrix") {
    Var a = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    Var b = g.constant(Tensor::matrix(3, 2, {7, 8, 9, 10, 11, 12}));
    Var c = matmul(a, b);
    CHECK(c.value().shape == std::vector<int>{2, 2});
    CHECK(c.value().at(0, 0) == doctest::Approx(58));
    CHECK(c.value().at(0, 1) == doctest::Approx(64));
    CHECK(c.value().at(1, 0) == doctest::Approx(139));
    CHECK(c.value().at(1, 1) == doctest::Approx(154));
  }
  SUBCASE("matmul matrix-vector and vector-matrix") {
    Var m = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    Var v = g.constant(Tensor::vector({1, 0, -1}));
    Var mv = matmul(m, v);
    CHECK(mv.value().shape == std::vector<int>{2});
    CHECK(mv.value().at(0) == doctest::Approx(-2));
    CHECK(mv.value().at(1) == doctest::Approx(-2));
    Var u = g.constant(Tensor::vector({1, -1}));
    Var um = matmul(u, m);
    CHECK(um.value().shape == std::vector<int>{3});
    CHECK(um.value().at(0) == doctest::Approx(-3));
    CHECK(um.value().at(2) == doctest::Approx(-3));
  }
  SUBCASE("softmax rows sum to one and log_softmax matches") {
    Var x = g.constant(Tensor::matrix(2, 3, {0.1, 0.5, -1, 2, 0, 1}));
    Var s = softmax(x);
    Var ls = log_softmax(x);
    for (int r = 0; r < 2; ++r) {
      real total = 0;
      for (int j = 0; j < 3; ++j) {
        total += s.value().at(r, j);
        CHECK(std::log(s.value().at(r, j)) ==
              doctest::Approx(ls.value().at(r, j)).epsilon(1e-9));
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("add_rowvec broadcasts over rows") {
    Var m = g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    Var v = g.constant(Tensor::vector({10, 20}));
    Var r = add_rowvec(m, v);
    CHECK(r.value().at(0, 0) == doctest::Approx(11));
    CHECK(r.value().at(1, 1) == doctest::Approx(24));
  }
  SUBCASE("mul with scalar broadcast") {
    Var a = g.constant(Tensor::vector({1, 2, 3}));
    Var s = g.constant(Tensor::scalar(4));
    Var r = mul(a, s);
    CHECK(r.value().at(2) == doctest::Approx(12));
  }
  SUBCASE("concat, slice, stack_rows, embed_lookup, sum, scale") {
    Var a = g.constant(Tensor::vector({1, 2}));
    Var b = g.constant(Tensor::vector({3, 4, 5}));
    Var c = concat(a, b);
    CHECK(c.value().shape == std::vector<int>{5});
    CHECK(c.value().at(4) == doctest::Approx(5));
    Var sl = slice(c, 1, 3);
    CHECK(sl.value().at(0) == doctest::Approx(2));
    CHECK(sl.value().at(2) == doctest::Approx(4));
    std::vector<Var> rows = {a, a};
    Var st = stack_rows(g, rows);
    CHECK(st.value().shape == std::vector<int>{2, 2});
    Var tbl = g.constant(Tensor::matrix(3, 2, {0, 1, 2, 3, 4, 5}));
    Var e = embed_lookup(tbl, 2);
    CHECK(e.value().at(0) == doctest::Approx(4));
    CHECK(sum(b).value().at(0) == doctest::Approx(12));
    CHECK(scale(b, real(0.5)).value().at(1) == doctest::Approx(2));
  }
}

TEST_CASE("shape errors") {
  Graph g;
  Var a = g.constant(Tensor::matrix(2, 3));
  Var b = g.constant(Tensor::matrix(2, 3));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  Var v2 = g.constant(Tensor::vector({1, 2}));
  Var v3 = g.constant(Tensor::vector({1, 2, 3}));
  CHECK_THROWS_AS(add(v2, v3), ShapeError);
  CHECK_THROWS_AS(mul(v2, v3), ShapeError);
  CHECK_THROWS_AS(add_rowvec(a, v2), ShapeError);
  CHECK_THROWS_AS(slice(v2, 1, 2), ShapeError);
  CHECK_THROWS_AS(embed_lookup(a, 5), ShapeError);
}

TEST_CASE("non-finite forward values abort with the op name") {
  Graph g;
  Var big = g.constant(Tensor::vector({real(1e308)}));
  CHECK_THROWS_AS(mul(big, big), NumericalError);
  try {
    Var b2 = g.constant(Tensor::vector({real(1e308)}));
    mul(b2, b2);
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("mul") != std::string::npos);
  }
}

TEST_CASE("backward fills parameter gradients through shared leaves") {
  Tensor w = Tensor::vector({2, 3});
  Graph g;
  Var x = g.leaf(&w);
  Var y = g.leaf(&w);  // cached: same node
  CHECK(x.id == y.id);
  Var loss = sum(mul(x, x));  // d/dw sum(w^2) = 2w
  g.backward(loss);
  CHECK(w.grad[0] == doctest::Approx(4));
  CHECK(w.grad[1] == doctest::Approx(6));
}

TEST_CASE("graphs are single-use for backward") {
  Tensor w = Tensor::vector({1});
  Graph g;
  Var loss = sum(g.leaf(&w));
  g.backward(loss);
  CHECK(g.consumed());
  CHECK_THROWS_AS(g.backward(loss), std::runtime_error);
}

TEST_CASE("backward requires a scalar loss") {
  Tensor w = Tensor::vector({1, 2});
  Graph g;
  Var v = g.leaf(&w);
  CHECK_THROWS_AS(g.backward(v), ShapeError);
}

TEST_CASE("detach blocks gradient flow but keeps the forward value") {
  Tensor w = Tensor::vector({3});
  Graph g;
  Var x = g.leaf(&w);
  Var d = detach(x);
  CHECK(d.value().at(0) == doctest::Approx(3));
  w.zero_grad();
  g.backward(sum(mul(d, d)));
  CHECK(w.grad[0] == doctest::Approx(0));
}

TEST_CASE("straight-through factor: forward one, gradient one") {
  // p + (1 - stopgrad(p)) is the coupling construction: value 1 for any p,
  // d(factor)/dp = 1.
  Tensor p = Tensor::vector({real(0.37)});
  Graph g;
  Var pv = g.leaf(&p);
  Var one = g.constant(Tensor::scalar(1));
  Var factor = add(pv, add(one, scale(detach(pv), real(-1))));
  CHECK(factor.value().at(0) == doctest::Approx(1.0).epsilon(1e-15));
  p.zero_grad();
  g.backward(sum(scale(factor, real(5))));  // d(5*factor)/dp = 5
  CHECK(p.grad[0] == doctest::Approx(5.0));
}

TEST_CASE("per-op gradients match finite differences (100 seeded trials)") {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(derive_seed(1234, static_cast<std::uint64_t>(trial)));
    CAPTURE(trial);

    {
      Tensor a = random_tensor({3, 4}, rng);
      Tensor b = random_tensor({4, 2}, rng);
      auto loss = [&](Graph& g) {
        return sum(tanh(matmul(g.leaf(&a), g.leaf(&b))));
      };
      GradCheckReport rep = gradient_check(
          loss, {{"a", &a}, {"b", &b}}, {.step = 1e-6, .tolerance = 1e-6});
      CAPTURE(rep.summary());
      CHECK(rep.passed);
    }
    {
      Tensor m = random_tensor({3, 4}, rng);
      Tensor v = random_tensor({4}, rng);
      Tensor q = random_tensor({4}, rng);
      auto loss = [&](Graph& g) {
        Var pre = tanh(add_rowvec(g.leaf(&m), g.leaf(&v)));
        Var s = softmax(matmul(pre, g.leaf(&q)));
        return sum(mul(s, s));
      };
      GradCheckReport rep =
          gradient_check(loss, {{"m", &m}, {"v", &v}, {"q", &q}},
                         {.step = 1e-6, .tolerance = 1e-6});
      CAPTURE(rep.summary());
      CHECK(rep.passed);
    }
    {
      Tensor x = random_tensor({5}, rng);
      check_unary([](Graph& g, Tensor* p) {
        return sum(mul(sigmoid(g.leaf(p)), tanh(g.leaf(p))));
      }, x);
    }
    {
      Tensor x = random_tensor({2, 5}, rng);
      check_unary([](Graph& g, Tensor* p) {
        Var ls = log_softmax(g.leaf(p));
        return sum(mul(ls, ls));
      }, x);
    }
    {
      Tensor a = random_tensor({3}, rng);
      Tensor b = random_tensor({4}, rng);
      auto loss = [&](Graph& g) {
        Var c = concat(g.leaf(&a), g.leaf(&b));
        Var s = slice(c, 1, 5);
        std::vector<Var> rows = {s, tanh(s)};
        Var st = stack_rows(g, rows);
        return sum(mul(st, st));
      };
      GradCheckReport rep = gradient_check(
          loss, {{"a", &a}, {"b", &b}}, {.step = 1e-6, .tolerance = 1e-6});
      CAPTURE(rep.summary());
      CHECK(rep.passed);
    }
    {
      Tensor tbl = random_tensor({4, 3}, rng);
      Tensor s = random_tensor({1}, rng);
      auto loss = [&](Graph& g) {
        Var row = embed_lookup(g.leaf(&tbl), 2);
        return sum(mul(scale(row, real(1.5)), g.leaf(&s)));
      };
      GradCheckReport rep = gradient_check(
          loss, {{"tbl", &tbl}, {"s", &s}}, {.step = 1e-6, .tolerance = 1e-6});
      CAPTURE(rep.summary());
      CHECK(rep.passed);
    }
  }
}
