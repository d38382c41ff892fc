#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "kehnn/matcher.h"
#include "kehnn/trainer.h"
#include "op_check.h"
#include "oracles.h"
#include "synthetic.h"

using namespace kehnn;
using testing::random_tensor;

namespace {

// Same model restricted to channel one, with the conv kernels cut down to
// the channel-one slice.
Model only_m1(const Model& full) {
  Model m = full;
  m.config.channels = {true, false, false};
  const Tensor& k = full.params.conv.kernels;
  const std::size_t F = k.dim(0), C = k.dim(1), R = k.dim(2), S = k.dim(3);
  Tensor slice({F, 1, R, S});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t i = 0; i < R * S; ++i) slice[f * R * S + i] = k[f * C * R * S + i];
  m.params.conv.kernels = slice;
  return m;
}

}  // namespace

TEST_CASE("feature vector length at full size") {
  Graph g;
  SimilarityMatrixSet maps;
  maps.m1 = g.constant(Tensor({200, 200}));
  maps.m2 = g.constant(Tensor({200, 200}));
  maps.m3 = g.constant(Tensor({200, 200}));
  std::mt19937_64 rng(1);
  Var v = extract_features(maps, g.constant(random_tensor({8, 3, 3, 3}, rng)),
                           g.constant(Tensor({8})), {3, 3, 3, 3});
  CHECK(v.shape() == Shape{1, 34848});
  for (double x : v.value().values()) CHECK(x == 0.0);

  TrainConfig c;
  CHECK(c.feature_dim() == 34848);
}

TEST_CASE("single-pixel kernels give pooled channel maxima") {
  std::mt19937_64 rng(2);
  Graph g;
  SimilarityMatrixSet maps;
  Tensor a = random_tensor({7, 8}, rng), b = random_tensor({7, 8}, rng);
  maps.m1 = g.constant(a);
  maps.m2 = g.constant(b);
  Tensor k({2, 2, 1, 1});
  k[0] = 1.0;  // map 0 reads channel 0
  k[3] = 1.0;  // map 1 reads channel 1
  Tensor v = extract_features(maps, g.constant(k), g.constant(Tensor({2})), {2, 3, 2, 3}).value();
  oracle::Vec image;
  for (const Tensor* t : {&a, &b})
    for (double x : t->values()) image.push_back(oracle::relu(x));
  oracle::Vec want = oracle::maxpool2d(image, 2, 7, 8, 2, 3, 2, 3);
  REQUIRE(v.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(v[i] == want[i]);
}

TEST_CASE("score examples") {
  Graph g;
  Var v = g.constant(Tensor::row({0.3, -1.0, 2.0}));
  Tensor p = score(v, g.constant(Tensor({4, 3})), g.constant(Tensor({1, 4})),
                   g.constant(Tensor({3, 4})), g.constant(Tensor({1, 3})))
                 .value();
  for (double x : p.values()) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-15));

  Tensor q = score(v, g.constant(Tensor({4, 3})), g.constant(Tensor({1, 4})),
                   g.constant(Tensor({2, 4})),
                   g.constant(Tensor::row({0.0, std::log(3.0)})))
                 .value();
  CHECK(q[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(q[1] == doctest::Approx(0.75).epsilon(1e-14));

  CHECK_THROWS_AS(score(v, g.constant(Tensor({4, 2})), g.constant(Tensor({1, 4})),
                        g.constant(Tensor({3, 4})), g.constant(Tensor({1, 3}))),
                  ShapeError);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor r = score(g.constant(random_tensor({1, 6}, rng, -5, 5)),
                     g.constant(random_tensor({5, 6}, rng)), g.constant(random_tensor({1, 5}, rng)),
                     g.constant(random_tensor({3, 5}, rng, -5, 5)),
                     g.constant(random_tensor({1, 3}, rng)))
                   .value();
    double total = 0.0;
    for (double x : r.values()) {
      CHECK(x >= 0.0);
      total += x;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("initialisation") {
  TrainConfig c = synthetic::tiny_config();
  Model m = synthetic::tiny_model(c, 5);
  validate_model(m);
  for (std::size_t j = 0; j < c.d; ++j) CHECK(m.params.embeddings.at(0, j) == 0.0);
  for (double x : m.params.conv.biases.values()) CHECK(x == 0.0);
  for (double x : m.params.mlp.b5.values()) CHECK(x == 0.0);
  for (double x : m.params.mlp.w1.values()) CHECK(std::abs(x) <= c.init_scale);
  CHECK(m.params.conv.kernels.shape() == Shape{2, 3, 3, 3});
  CHECK(m.params.mlp.w1.shape() == Shape{4, c.feature_dim()});

  Model again = synthetic::tiny_model(c, 5);
  CHECK(again.params.tensors().size() == m.params.tensors().size());
  auto a = m.params.tensors(), b = again.params.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);

  auto names = m.params.names();
  CHECK(std::find(names.begin(), names.end(), "gate.w_k") != names.end());
  CHECK(std::find(names.begin(), names.end(), "mlp.b5") != names.end());
}

TEST_CASE("encode_record") {
  Vocabulary v;
  v.add("hi");
  v.add("there");
  DatasetRecord r{1, "Hi there friend", "there", "k", "", "g1"};
  EncodedPair p = encode_record(r, v, 2);
  CHECK(p.a.ids == std::vector<TokenId>{2, 3});
  CHECK(p.b.ids == std::vector<TokenId>{3, 0});
  CHECK(p.length == 4);
  CHECK(p.key_a == "k");
  CHECK(p.group == "g1");
}

TEST_CASE("forward is a deterministic distribution") {
  TrainConfig c = synthetic::tiny_config();
  Model m = synthetic::tiny_model(c, 6);
  for (std::uint64_t s = 0; s < 20; ++s) {
    EncodedPair p = synthetic::tiny_pair(m, s, 0);
    Tensor a = predict(m, p), b = predict(m, p);
    CHECK(a == b);
    CHECK(std::abs(a[0] + a[1] - 1.0) <= 1e-12);
  }
  // Identical texts and keys.
  EncodedPair p = synthetic::tiny_pair(m, 99, 1);
  p.b = p.a;
  p.key_b = p.key_a;
  Tensor d = predict(m, p);
  CHECK(d[0] >= 0.0);
  CHECK(d[1] >= 0.0);
  CHECK(std::abs(d[0] + d[1] - 1.0) <= 1e-12);
}

TEST_CASE("forward rejects malformed pairs") {
  TrainConfig c = synthetic::tiny_config();
  Model m = synthetic::tiny_model(c, 6);
  EncodedPair p = synthetic::tiny_pair(m, 1, 0);
  EncodedPair shortp = p;
  shortp.a.ids.pop_back();
  CHECK_THROWS_AS(predict(m, shortp), ShapeError);
  EncodedPair bad = p;
  bad.b.ids[0] = 1000;
  CHECK_THROWS_AS(predict(m, bad), std::out_of_range);
  EncodedPair label = p;
  label.label = 2;
  CHECK_THROWS_AS(example_loss(m, label, Mode::kInfer, nullptr, nullptr), std::out_of_range);
}

TEST_CASE("unknown knowledge key acts as a zero vector") {
  TrainConfig c = synthetic::tiny_config();
  Model m = synthetic::tiny_model(c, 7);
  EncodedPair p = synthetic::tiny_pair(m, 3, 0);
  p.key_a = "no-such-key";
  Tensor unknown = predict(m, p);
  m.params.knowledge.add("no-such-key", Tensor({1, c.d}));
  CHECK(predict(m, p) == unknown);
}

TEST_CASE("zeroed channel slices reduce to the channel-one model") {
  TrainConfig c = synthetic::tiny_config();
  c.activation = Activation::kRelu;
  c.max_len = 8;
  Model full = synthetic::tiny_model(c, 8);
  Tensor& k = full.params.conv.kernels;
  const std::size_t F = k.dim(0), R = k.dim(2), S = k.dim(3);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t ch = 1; ch < 3; ++ch)
      for (std::size_t i = 0; i < R * S; ++i) k[(f * 3 + ch) * R * S + i] = 0.0;
  Model reduced = only_m1(full);
  validate_model(reduced);
  for (std::uint64_t s = 0; s < 20; ++s) {
    EncodedPair p = synthetic::tiny_pair(full, s, 0);
    CHECK(predict(full, p) == predict(reduced, p));
  }
}

TEST_CASE("channel-one model equals a loop-built single-channel matcher") {
  for (auto act : {Activation::kRelu, Activation::kTanh}) {
    TrainConfig c = synthetic::tiny_config();
    c.activation = act;
    c.max_len = 9;
    c.channels = {true, false, false};
    Model m = synthetic::tiny_model(c, 9);
    oracle::SingleChannelNet net = synthetic::single_channel_net(m, 0);
    for (std::uint64_t s = 0; s < 20; ++s) {
      EncodedPair p = synthetic::tiny_pair(m, s, 0);
      Tensor got = predict(m, p);
      oracle::Vec want = oracle::single_channel_forward(
          net, synthetic::embedding_rows(m, p.a), c.max_len,
          synthetic::embedding_rows(m, p.b), c.max_len);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == want[i]);
    }
  }
}

TEST_CASE("end-to-end gradient matches finite differences for every group") {
  for (auto act : {Activation::kTanh, Activation::kSigmoid}) {
    TrainConfig c = synthetic::tiny_config();
    c.activation = act;
    Model m = synthetic::tiny_model(c, 10);
    std::vector<EncodedPair> pairs = {synthetic::tiny_pair(m, 1, 0),
                                      synthetic::tiny_pair(m, 2, 1)};
    GradCheckOptions opt;
    opt.eps = 1e-5;
    ModelGradCheck check = check_model_gradients(m, pairs, opt);
    CHECK(check.result.max_rel_error < 1e-3);
    std::set<ParamGroup> seen(check.groups.begin(), check.groups.end());
    CHECK(seen.size() == 9);
    for (std::size_t i = 0; i < check.names.size(); ++i) {
      INFO(check.names[i]);
      CHECK(check.result.per_tensor[i] < 1e-3);
    }
  }
}
