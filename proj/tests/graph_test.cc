#include <cmath>
#include <random>

#include "doctest.h"
#include "kehnn/gradcheck.h"
#include "kehnn/graph.h"
#include "op_check.h"
#include "oracles.h"

using namespace kehnn;
using testing::op_gradient_error;
using testing::random_tensor;

TEST_CASE("matmul examples") {
  Graph g;
  Var id = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var m = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  CHECK(matmul(id, m).value() == m.value());
  CHECK(matmul(g.constant(Tensor::matrix({{1, 0}})),
               g.constant(Tensor::matrix({{0}, {5}})))
            .value() == Tensor::matrix({{0}}));
  CHECK(matmul(m, g.constant(Tensor::matrix({{5}, {6}}))).value() ==
        Tensor::matrix({{17}, {39}}));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x3] x [2x3]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul_nt(a, g.constant(Tensor({2, 4}))), ShapeError);
  CHECK_THROWS_AS(add(a, g.constant(Tensor({3, 2}))), ShapeError);
}

TEST_CASE("activations") {
  Graph g;
  Var zero = g.constant(Tensor::row({0.0}));
  CHECK(sigmoid(zero).value()[0] == 0.5);
  CHECK(tanh(zero).value()[0] == 0.0);
  CHECK(relu(g.constant(Tensor::row({-1.0}))).value()[0] == 0.0);
  CHECK(sigmoid(g.constant(Tensor::row({1.0}))).value()[0] ==
        doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(parse_activation("tanh") == Activation::kTanh);
  CHECK_THROWS_AS(parse_activation("gelu"), std::invalid_argument);
}

TEST_CASE("relu subgradient at zero is zero") {
  Graph g;
  Var x = g.input(Tensor::row({0.0, 2.0, -1.0}));
  g.backward(sum(relu(x)));
  CHECK(*x.grad() == Tensor::row({0.0, 1.0, 0.0}));
}

TEST_CASE("softmax examples") {
  Graph g;
  auto sm = [&](std::initializer_list<double> v) {
    return softmax(g.constant(Tensor::row(v))).value();
  };
  CHECK(sm({0, 0}) == Tensor::row({0.5, 0.5}));
  Tensor big = sm({1000, 1000, 1000});
  for (double v : big.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  Tensor p = sm({0, std::log(3.0)});
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax sums to one and ignores a constant shift") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Graph g;
    Tensor logits = random_tensor({1, 1 + static_cast<std::size_t>(trial % 7)}, rng, -20, 20);
    Tensor shifted = logits;
    const double c = std::uniform_real_distribution<double>(-50, 50)(rng);
    for (double& v : shifted.values()) v += c;
    Tensor p = softmax(g.constant(logits)).value();
    Tensor q = softmax(g.constant(shifted)).value();
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      total += p[i];
      CHECK(p[i] > 0.0);
      CHECK(std::abs(p[i] - q[i]) <= 1e-12);
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("conv2d examples") {
  Graph g;
  Var ones = g.constant(Tensor({1, 3, 3}, 1.0));
  Var k = g.constant(Tensor({1, 1, 3, 3}, 1.0));
  Var b = g.constant(Tensor({1}));
  Tensor out = conv2d_valid(ones, k, b, Activation::kRelu).value();
  CHECK(out.shape() == Shape{1, 1, 1});
  CHECK(out[0] == 9.0);

  std::mt19937_64 rng(1);
  Tensor x = random_tensor({1, 5, 6}, rng);
  Tensor delta({1, 1, 2, 3});
  delta[0] = 1.0;
  Tensor cropped = conv2d(g.constant(x), g.constant(delta), b).value();
  REQUIRE(cropped.shape() == Shape{1, 4, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(cropped.at(0, i, j) == x.at(0, i, j));

  CHECK_THROWS_AS(conv2d(g.constant(Tensor({1, 2, 2})), k, b), ShapeError);
}

TEST_CASE("conv2d at full model size") {
  Graph g;
  std::mt19937_64 rng(2);
  Var x = g.constant(random_tensor({3, 200, 200}, rng));
  Var k = g.constant(random_tensor({8, 3, 3, 3}, rng));
  Var b = g.constant(Tensor({8}));
  Var y = conv2d_valid(x, k, b, Activation::kRelu);
  CHECK(y.shape() == Shape{8, 198, 198});
  CHECK(maxpool2d(y, {3, 3, 3, 3}).shape() == Shape{8, 66, 66});
}

TEST_CASE("maxpool2d examples") {
  Graph g;
  Tensor m({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  CHECK(maxpool2d(g.constant(m), {2, 2, 2, 2}).value() ==
        Tensor({1, 1, 1}, std::vector<double>{4}));
  Tensor flat({2, 4, 5}, 2.5);
  Tensor pooled = maxpool2d(g.constant(flat), {2, 2, 2, 2}).value();
  CHECK(pooled.shape() == Shape{2, 2, 2});
  for (double v : pooled.values()) CHECK(v == 2.5);
  CHECK_THROWS_AS(maxpool2d(g.constant(m), {3, 1, 1, 1}), ShapeError);
}

TEST_CASE("maxpool ties route the gradient to the first element") {
  Graph g;
  Var x = g.input(Tensor({1, 2, 2}, 1.0));
  g.backward(sum(maxpool2d(x, {2, 2, 2, 2})));
  CHECK(*x.grad() == Tensor({1, 2, 2}, std::vector<double>{1, 0, 0, 0}));
}

TEST_CASE("conv2d and maxpool2d match nested-loop references bitwise") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> ext(1, 4), side(3, 10), win(1, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t C = ext(rng), F = ext(rng), H = side(rng), W = side(rng);
    const std::size_t R = win(rng), S = win(rng);
    Tensor x = random_tensor({C, H, W}, rng);
    Tensor k = random_tensor({F, C, R, S}, rng);
    Tensor b = random_tensor({F}, rng);
    Graph g;
    Tensor y = conv2d(g.constant(x), g.constant(k), g.constant(b)).value();
    auto ref = oracle::conv2d({x.values().begin(), x.values().end()}, C, H, W,
                              {k.values().begin(), k.values().end()}, F, R, S,
                              {b.values().begin(), b.values().end()});
    REQUIRE(y.size() == ref.size());
    CHECK(std::equal(ref.begin(), ref.end(), y.values().begin()));

    const std::size_t PR = win(rng), PS = win(rng), SR = win(rng), SS = win(rng);
    Tensor p = maxpool2d(g.constant(x), {PR, PS, SR, SS}).value();
    auto pref = oracle::maxpool2d({x.values().begin(), x.values().end()}, C, H,
                                  W, PR, PS, SR, SS);
    REQUIRE(p.size() == pref.size());
    CHECK(std::equal(pref.begin(), pref.end(), p.values().begin()));
  }
}

TEST_CASE("backward examples") {
  Graph g;
  Var x = g.input(Tensor::row({1.0, -2.0, 3.0}));
  g.backward(sum(x));
  CHECK(*x.grad() == Tensor::row({1, 1, 1}));

  Graph h;
  Var y = h.input(Tensor::row({1.5, -2.0, 0.25}));
  h.backward(affine(sum(mul(y, y)), 0.5, 0.0));
  CHECK(*y.grad() == y.value());
}

TEST_CASE("backward requires a scalar loss") {
  Graph g;
  Var x = g.input(Tensor::row({1.0, 2.0}));
  CHECK_THROWS_AS(g.backward(tanh(x)), ShapeError);
}

TEST_CASE("unreached tensors keep no gradient") {
  Graph g;
  Var x = g.input(Tensor::row({1.0}));
  Var unused = g.input(Tensor::row({2.0}));
  Var later = tanh(x);
  g.backward(sum(x));
  CHECK(x.grad() != nullptr);
  CHECK(unused.grad() == nullptr);
  CHECK(later.grad() == nullptr);
}

TEST_CASE("repeated backward accumulates until zeroed") {
  Graph g;
  Var x = g.input(Tensor::row({1.0, 2.0}));
  Var loss = sum(mul(x, x));
  g.backward(loss);
  g.backward(loss);
  CHECK(*x.grad() == Tensor::row({4.0, 8.0}));
  g.zero_grad();
  CHECK(x.grad() == nullptr);
  g.backward(loss);
  CHECK(*x.grad() == Tensor::row({2.0, 4.0}));
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(5);
  Tensor xv = random_tensor({2, 3}, rng);
  Tensor w = random_tensor({3, 3}, rng);
  const double a = 0.7, b = -1.3;
  auto losses = [&](Graph& g, Var x) {
    Var h = tanh(matmul(x, g.constant(w)));
    return std::pair{sum(h), sum(mul(h, x))};
  };
  Graph g1;
  Var x1 = g1.input(xv);
  auto [l1, l2] = losses(g1, x1);
  g1.backward(l1, a);
  g1.backward(l2, b);

  Graph g2;
  Var x2 = g2.input(xv);
  auto [m1, m2] = losses(g2, x2);
  g2.backward(add(affine(m1, a, 0.0), affine(m2, b, 0.0)));
  for (std::size_t i = 0; i < xv.size(); ++i) {
    CHECK((*x1.grad())[i] == doctest::Approx((*x2.grad())[i]).epsilon(1e-12));
  }
}

TEST_CASE("non-finite results raise NumericError") {
  Graph g;
  Var x = g.constant(Tensor::row({1e200}));
  CHECK_THROWS_AS(mul(x, x), NumericError);
}

TEST_CASE("every differentiable op matches finite differences") {
  std::mt19937_64 rng(21);
  auto r = [&](Shape s) { return random_tensor(std::move(s), rng); };
  // Keeps relu inputs away from the kink.
  auto away = [&](Shape s) {
    Tensor t = r(std::move(s));
    for (double& v : t.values()) v += v >= 0 ? 0.1 : -0.1;
    return t;
  };
  using V = std::vector<Var>;
  const double tol = 1e-5;
  CHECK(op_gradient_error([](V& v) { return matmul(v[0], v[1]); },
                          {r({2, 3}), r({3, 4})}) < tol);
  CHECK(op_gradient_error([](V& v) { return matmul_nt(v[0], v[1]); },
                          {r({2, 3}), r({4, 3})}) < tol);
  CHECK(op_gradient_error([](V& v) { return add(v[0], v[1]); },
                          {r({2, 3}), r({2, 3})}) < tol);
  CHECK(op_gradient_error([](V& v) { return sub(v[0], v[1]); },
                          {r({2, 3}), r({2, 3})}) < tol);
  CHECK(op_gradient_error([](V& v) { return mul(v[0], v[1]); },
                          {r({2, 3}), r({2, 3})}) < tol);
  CHECK(op_gradient_error([](V& v) { return add_row(v[0], v[1]); },
                          {r({3, 2}), r({1, 2})}) < tol);
  CHECK(op_gradient_error([](V& v) { return add_scalar(v[0], v[1]); },
                          {r({3, 2}), r({1})}) < tol);
  CHECK(op_gradient_error([](V& v) { return affine(v[0], -1.5, 2.0); },
                          {r({3, 2})}) < tol);
  CHECK(op_gradient_error([](V& v) { return sigmoid(v[0]); }, {r({2, 4})}) < tol);
  CHECK(op_gradient_error([](V& v) { return tanh(v[0]); }, {r({2, 4})}) < tol);
  CHECK(op_gradient_error([](V& v) { return relu(v[0]); }, {away({2, 4})}) < tol);
  CHECK(op_gradient_error([](V& v) { return softmax(v[0]); }, {r({1, 5})}) < tol);
  CHECK(op_gradient_error([](V& v) { return neg_log(softmax(v[0]), 2); },
                          {r({1, 4})}) < tol);
  CHECK(op_gradient_error([](V& v) { return row(v[0], 1); }, {r({3, 2})}) < tol);
  CHECK(op_gradient_error(
            [](V& v) {
              std::vector<Var> rows = {v[0], v[1], v[0]};
              return stack_rows(rows);
            },
            {r({1, 3}), r({1, 3})}) < tol);
  CHECK(op_gradient_error([](V& v) { return concat_cols(v[0], v[1]); },
                          {r({3, 2}), r({3, 4})}) < tol);
  CHECK(op_gradient_error(
            [](V& v) {
              std::vector<Var> maps = {v[0], v[1]};
              return stack_channels(maps);
            },
            {r({3, 2}), r({3, 2})}) < tol);
  CHECK(op_gradient_error([](V& v) { return reshape(v[0], {6}); }, {r({3, 2})}) < tol);
  CHECK(op_gradient_error([](V& v) { return conv2d(v[0], v[1], v[2]); },
                          {r({2, 5, 6}), r({3, 2, 2, 3}), r({3})}) < tol);
  CHECK(op_gradient_error([](V& v) { return maxpool2d(v[0], {2, 2, 2, 2}); },
                          {r({2, 5, 6})}) < tol);
  CHECK(op_gradient_error([](V& v) { return maxpool2d(v[0], {3, 2, 1, 2}); },
                          {r({2, 5, 6})}) < tol);
}

TEST_CASE("finite_diff_gradcheck examples") {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor* params[] = {&x};
  auto quad = [&] {
    double s = 0.0;
    for (double v : x.values()) s += v * v;
    return s / 2.0;
  };
  Tensor analytic = x;
  auto res = finite_diff_gradcheck(quad, params, std::span(&analytic, 1));
  CHECK(res.max_rel_error < 1e-8);
  CHECK(res.checked == 12);

  Tensor zero(x.shape());
  auto flat = finite_diff_gradcheck([] { return 3.0; }, params, std::span(&zero, 1));
  CHECK(flat.max_rel_error == 0.0);

  // A wrong gradient is located.
  Tensor wrong = x;
  wrong[5] += 1.0;
  auto bad = finite_diff_gradcheck(quad, params, std::span(&wrong, 1));
  CHECK(bad.coordinate == 5);
  CHECK(bad.max_rel_error > 0.1);

  CHECK(relative_error(3.0, 1.0) == doctest::Approx(2.0 / 3.0));
  CHECK(relative_error(0.5, 0.25) == 0.25);
}
