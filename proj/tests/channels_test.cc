#include <cmath>
#include <random>

#include "doctest.h"
#include "kehnn/channels.h"
#include "kehnn/knowledge.h"
#include "op_check.h"
#include "oracles.h"

using namespace kehnn;
using testing::random_tensor;

TEST_CASE("word channel examples") {
  Graph g;
  Var unit = g.constant(Tensor::row({0, 1, 0}));
  Var other = g.constant(Tensor::row({1, 0, 0}));
  CHECK(word_channel(unit, unit, Activation::kRelu).value()[0] == 1.0);
  CHECK(word_channel(unit, other, Activation::kRelu).value()[0] == 0.0);
  CHECK(word_channel(unit, other, Activation::kTanh).value()[0] == 0.0);
  CHECK(word_channel(unit, unit, Activation::kTanh).value()[0] ==
        doctest::Approx(0.76159).epsilon(1e-5));
  CHECK_THROWS_AS(word_channel(unit, g.constant(Tensor::row({1, 0})), Activation::kRelu),
                  ShapeError);
}

TEST_CASE("bilinear channel examples") {
  Graph g;
  Var eye = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var e1 = g.constant(Tensor::row({1, 0}));
  CHECK(bilinear_channel(e1, e1, eye, g.constant(Tensor::scalar(0)), Activation::kRelu)
            .value()[0] == 1.0);
  CHECK(bilinear_channel(e1, e1, eye, g.constant(Tensor::scalar(-2)), Activation::kRelu)
            .value()[0] == 0.0);
  CHECK_THROWS_AS(bilinear_channel(e1, g.constant(Tensor::row({1, 0, 0})), eye,
                                   g.constant(Tensor::scalar(0)), Activation::kRelu),
                  ShapeError);
}

TEST_CASE("bilinear channel matches the triple loop") {
  std::mt19937_64 rng(9);
  for (auto act : {Activation::kTanh, Activation::kRelu, Activation::kSigmoid}) {
    for (int trial = 0; trial < 20; ++trial) {
      Tensor hx = random_tensor({3, 4}, rng), hy = random_tensor({5, 4}, rng);
      Tensor w = random_tensor({4, 4}, rng), b = random_tensor({1}, rng);
      Graph g;
      Tensor got = bilinear_channel(g.constant(hx), g.constant(hy), g.constant(w),
                                    g.constant(b), act)
                       .value();
      auto flat = [](const Tensor& t) {
        return oracle::Vec(t.values().begin(), t.values().end());
      };
      auto want = oracle::bilinear(flat(hx), 3, flat(hy), 5, flat(w), 4, b[0], act);
      for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(std::abs(got[i] - want[i]) <= 1e-12);
    }
  }
}

TEST_CASE("word channel symmetry, range and permutation") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    Graph g;
    Tensor e = random_tensor({6, 4}, rng, -2, 2);
    Tensor m = word_channel(g.constant(e), g.constant(e), Activation::kTanh).value();
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(m.at(i, j) == m.at(j, i));
        CHECK(std::abs(m.at(i, j)) < 1.0);
      }
    Tensor ey = random_tensor({5, 4}, rng, -2, 2);
    Tensor r = word_channel(g.constant(e), g.constant(ey), Activation::kRelu).value();
    for (double v : r.values()) CHECK(v >= 0.0);

    std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
    Tensor pe(e.shape());
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t k = 0; k < 4; ++k) pe.at(i, k) = e.at(perm[i], k);
    Tensor pm = word_channel(g.constant(pe), g.constant(ey), Activation::kRelu).value();
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 5; ++j) CHECK(pm.at(i, j) == r.at(perm[i], j));
  }
}

namespace {

struct ChannelFixture {
  Graph g;
  ChannelVars vars;
  ChannelInputs in;

  ChannelFixture(std::size_t I, std::size_t J, std::size_t d, std::size_t m,
                 std::uint64_t seed, bool zero_gate, bool zero_knowledge) {
    std::mt19937_64 rng(seed);
    auto gru = [&] {
      GruVars v;
      for (Var* p : {&v.w_z, &v.w_r, &v.w_h}) *p = g.constant(random_tensor({m, d}, rng, -0.3, 0.3));
      for (Var* p : {&v.u_z, &v.u_r, &v.u_h}) *p = g.constant(random_tensor({m, m}, rng, -0.3, 0.3));
      return v;
    };
    vars.gate_w = g.constant(zero_gate ? Tensor({d, d}) : random_tensor({d, d}, rng));
    vars.gate_u = g.constant(zero_gate ? Tensor({d, d}) : random_tensor({d, d}, rng));
    vars.context_fwd = gru();
    vars.context_bwd = gru();
    vars.knowledge_fwd = gru();
    vars.knowledge_bwd = gru();
    vars.context_w = g.constant(random_tensor({2 * m, 2 * m}, rng));
    vars.context_b = g.constant(Tensor::scalar(0.1));
    vars.knowledge_w = g.constant(random_tensor({2 * m, 2 * m}, rng));
    vars.knowledge_b = g.constant(Tensor::scalar(-0.1));
    in.ex = g.constant(random_tensor({I, d}, rng));
    in.ey = g.constant(random_tensor({J, d}, rng));
    in.kx = g.constant(zero_knowledge ? Tensor({1, d}) : random_tensor({1, d}, rng));
    in.ky = g.constant(zero_knowledge ? Tensor({1, d}) : random_tensor({1, d}, rng));
  }
};

}  // namespace

TEST_CASE("zero knowledge and zero gate halve the embeddings for M3") {
  ChannelFixture f(4, 3, 5, 2, 11, true, true);
  SimilarityMatrixSet s = build_channels(f.in, f.vars, {true, true, true}, Activation::kTanh);
  REQUIRE(s.m3.has_value());
  // Same as running the second BiGRU over 0.5 * embeddings directly.
  Var hx = bigru_encode(affine(f.in.ex, 0.5, 0.0), f.vars.knowledge_fwd, f.vars.knowledge_bwd);
  Var hy = bigru_encode(affine(f.in.ey, 0.5, 0.0), f.vars.knowledge_fwd, f.vars.knowledge_bwd);
  Tensor want = bilinear_channel(hx, hy, f.vars.knowledge_w, f.vars.knowledge_b,
                                 Activation::kTanh)
                    .value();
  CHECK(s.m3->value() == want);

  // With the second BiGRU and bilinear set to the first ones, M3 is M2 at
  // half-scale input; any difference comes from the parameters.
  f.vars.knowledge_fwd = f.vars.context_fwd;
  f.vars.knowledge_bwd = f.vars.context_bwd;
  f.vars.knowledge_w = f.vars.context_w;
  f.vars.knowledge_b = f.vars.context_b;
  SimilarityMatrixSet shared = build_channels(f.in, f.vars, {false, false, true}, Activation::kTanh);
  Var hx2 = bigru_encode(affine(f.in.ex, 0.5, 0.0), f.vars.context_fwd, f.vars.context_bwd);
  Var hy2 = bigru_encode(affine(f.in.ey, 0.5, 0.0), f.vars.context_fwd, f.vars.context_bwd);
  CHECK(shared.m3->value() ==
        bilinear_channel(hx2, hy2, f.vars.context_w, f.vars.context_b, Activation::kTanh).value());
}

TEST_CASE("build_channels shapes, ranges and disabled channels") {
  ChannelFixture f(7, 4, 5, 3, 12, false, false);
  SimilarityMatrixSet tanh_set = build_channels(f.in, f.vars, {true, true, true}, Activation::kTanh);
  REQUIRE(tanh_set.enabled().size() == 3);
  for (Var m : tanh_set.enabled()) {
    CHECK(m.shape() == Shape{7, 4});
    for (double v : m.value().values()) CHECK(std::abs(v) < 1.0);
  }
  SimilarityMatrixSet relu_set = build_channels(f.in, f.vars, {true, true, true}, Activation::kRelu);
  for (Var m : relu_set.enabled())
    for (double v : m.value().values()) CHECK(v >= 0.0);

  SimilarityMatrixSet only_m1 = build_channels(f.in, f.vars, {true, false, false}, Activation::kRelu);
  CHECK(only_m1.m1.has_value());
  CHECK_FALSE(only_m1.m2.has_value());
  CHECK_FALSE(only_m1.m3.has_value());
  CHECK(only_m1.m1->value() == relu_set.m1->value());
}

TEST_CASE("full-length channels are 200 x 200") {
  ChannelFixture f(200, 200, 10, 4, 13, false, false);
  for (Var m : build_channels(f.in, f.vars, {true, true, true}, Activation::kRelu).enabled())
    CHECK(m.shape() == Shape{200, 200});
}

TEST_CASE("channel gradients match finite differences") {
  std::mt19937_64 rng(14);
  using V = std::vector<Var>;
  CHECK(testing::op_gradient_error(
            [](V& v) { return word_channel(v[0], v[1], Activation::kTanh); },
            {random_tensor({3, 4}, rng), random_tensor({2, 4}, rng)}) < 1e-5);
  CHECK(testing::op_gradient_error(
            [](V& v) { return bilinear_channel(v[0], v[1], v[2], v[3], Activation::kSigmoid); },
            {random_tensor({3, 4}, rng), random_tensor({2, 4}, rng),
             random_tensor({4, 4}, rng), random_tensor({1}, rng)}) < 1e-5);
}
