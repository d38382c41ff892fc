#include "kehnn/matcher.h"

#include <unordered_map>

#include "kehnn/dropout.h"

namespace kehnn {

std::string_view group_name(ParamGroup group) {
  switch (group) {
    case ParamGroup::kEmbedding:
      return "embedding";
    case ParamGroup::kKnowledge:
      return "knowledge";
    case ParamGroup::kGate:
      return "gate";
    case ParamGroup::kContextGru:
      return "context_gru";
    case ParamGroup::kKnowledgeGru:
      return "knowledge_gru";
    case ParamGroup::kContextBilinear:
      return "context_bilinear";
    case ParamGroup::kKnowledgeBilinear:
      return "knowledge_bilinear";
    case ParamGroup::kConv:
      return "conv";
    case ParamGroup::kMlp:
      return "mlp";
  }
  return "?";
}

namespace {

// Calls f(name, tensor, group) for every parameter in checkpoint order.
template <typename Params, typename F>
void visit_params(Params& p, F&& f) {
  f("embeddings", p.embeddings, ParamGroup::kEmbedding);
  f("knowledge", p.knowledge.vectors(), ParamGroup::kKnowledge);
  f("gate.w_k", p.gate.w_k, ParamGroup::kGate);
  f("gate.u_k", p.gate.u_k, ParamGroup::kGate);
  auto gru = [&](const std::string& prefix, auto& g, ParamGroup group) {
    f(prefix + ".w_z", g.w_z, group);
    f(prefix + ".w_r", g.w_r, group);
    f(prefix + ".w_h", g.w_h, group);
    f(prefix + ".u_z", g.u_z, group);
    f(prefix + ".u_r", g.u_r, group);
    f(prefix + ".u_h", g.u_h, group);
  };
  gru("context_gru.fwd", p.context_gru.forward, ParamGroup::kContextGru);
  gru("context_gru.bwd", p.context_gru.backward, ParamGroup::kContextGru);
  gru("knowledge_gru.fwd", p.knowledge_gru.forward, ParamGroup::kKnowledgeGru);
  gru("knowledge_gru.bwd", p.knowledge_gru.backward, ParamGroup::kKnowledgeGru);
  f("context_match.w", p.context_match.w, ParamGroup::kContextBilinear);
  f("context_match.b", p.context_match.b, ParamGroup::kContextBilinear);
  f("knowledge_match.w", p.knowledge_match.w, ParamGroup::kKnowledgeBilinear);
  f("knowledge_match.b", p.knowledge_match.b, ParamGroup::kKnowledgeBilinear);
  f("conv.kernels", p.conv.kernels, ParamGroup::kConv);
  f("conv.biases", p.conv.biases, ParamGroup::kConv);
  f("mlp.w1", p.mlp.w1, ParamGroup::kMlp);
  f("mlp.b4", p.mlp.b4, ParamGroup::kMlp);
  f("mlp.w2", p.mlp.w2, ParamGroup::kMlp);
  f("mlp.b5", p.mlp.b5, ParamGroup::kMlp);
}

}  // namespace

std::vector<ParamRef> ModelParams::refs(const TrainConfig& config) {
  std::vector<ParamRef> out;
  visit_params(*this, [&](const std::string& name, Tensor& t, ParamGroup g) {
    ParamRef r{name, &t, g};
    r.frozen = (g == ParamGroup::kEmbedding && config.freeze_embeddings) ||
               (g == ParamGroup::kKnowledge && config.freeze_knowledge);
    r.pin_first_row = g == ParamGroup::kEmbedding;
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  std::vector<const Tensor*> out;
  visit_params(*this, [&](const std::string&, const Tensor& t, ParamGroup) {
    out.push_back(&t);
  });
  return out;
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  visit_params(*this, [&](const std::string& name, const Tensor&, ParamGroup) {
    out.push_back(name);
  });
  return out;
}

Model init_model(const TrainConfig& config, Vocabulary vocab, Tensor embeddings,
                 KnowledgeTable knowledge, std::mt19937_64& rng) {
  config.validate();
  const std::size_t d = config.d, m = config.m;
  Model model;
  model.config = config;
  model.vocab = std::move(vocab);
  ModelParams& p = model.params;
  p.embeddings = std::move(embeddings);
  p.knowledge = knowledge.size() ? std::move(knowledge) : KnowledgeTable(d);

  std::uniform_real_distribution<double> uniform(-config.init_scale,
                                                 config.init_scale);
  auto init = [&](Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = uniform(rng);
    return t;
  };
  auto gru = [&] {
    GruParams g;
    g.w_z = init({m, d});
    g.w_r = init({m, d});
    g.w_h = init({m, d});
    g.u_z = init({m, m});
    g.u_r = init({m, m});
    g.u_h = init({m, m});
    return g;
  };
  p.gate.w_k = init({d, d});
  p.gate.u_k = init({d, d});
  p.context_gru.forward = gru();
  p.context_gru.backward = gru();
  p.knowledge_gru.forward = gru();
  p.knowledge_gru.backward = gru();
  p.context_match.w = init({2 * m, 2 * m});
  p.knowledge_match.w = init({2 * m, 2 * m});
  p.conv.kernels = init({config.feature_maps, config.channel_count(),
                         config.conv_window[0], config.conv_window[1]});
  p.conv.biases = Tensor({config.feature_maps});
  p.mlp.w1 = init({config.hidden, config.feature_dim()});
  p.mlp.b4 = Tensor({1, config.hidden});
  p.mlp.w2 = init({config.C, config.hidden});
  p.mlp.b5 = Tensor({1, config.C});
  validate_model(model);
  return model;
}

void validate_model(const Model& model) {
  const TrainConfig& c = model.config;
  c.validate();
  const ModelParams& p = model.params;
  auto expect = [](const Tensor& t, const Shape& shape, const char* what) {
    if (t.shape() != shape) {
      throw ShapeError(std::string("model: ") + what + " has shape " +
                       shape_str(t.shape()) + ", expected " + shape_str(shape));
    }
  };
  const std::size_t d = c.d, m = c.m;
  expect(p.embeddings, {model.vocab.size(), d}, "embeddings");
  expect(p.knowledge.vectors(), {p.knowledge.size(), d}, "knowledge");
  expect(p.gate.w_k, {d, d}, "gate.w_k");
  expect(p.gate.u_k, {d, d}, "gate.u_k");
  for (const GruParams* g :
       {&p.context_gru.forward, &p.context_gru.backward,
        &p.knowledge_gru.forward, &p.knowledge_gru.backward}) {
    for (const Tensor* w : {&g->w_z, &g->w_r, &g->w_h}) expect(*w, {m, d}, "gru input");
    for (const Tensor* u : {&g->u_z, &g->u_r, &g->u_h}) expect(*u, {m, m}, "gru recurrent");
  }
  expect(p.context_match.w, {2 * m, 2 * m}, "context_match.w");
  expect(p.knowledge_match.w, {2 * m, 2 * m}, "knowledge_match.w");
  expect(p.context_match.b, {1}, "context_match.b");
  expect(p.knowledge_match.b, {1}, "knowledge_match.b");
  expect(p.conv.kernels,
         {c.feature_maps, c.channel_count(), c.conv_window[0], c.conv_window[1]},
         "conv.kernels");
  expect(p.conv.biases, {c.feature_maps}, "conv.biases");
  expect(p.mlp.w1, {c.hidden, c.feature_dim()}, "mlp.w1");
  expect(p.mlp.b4, {1, c.hidden}, "mlp.b4");
  expect(p.mlp.w2, {c.C, c.hidden}, "mlp.w2");
  expect(p.mlp.b5, {1, c.C}, "mlp.b5");
}

EncodedPair encode_record(const DatasetRecord& record, const Vocabulary& vocab,
                          std::size_t max_len) {
  auto ta = tokenize(record.text_a);
  auto tb = tokenize(record.text_b);
  EncodedPair out;
  out.a = encode_pad(ta, vocab, max_len);
  out.b = encode_pad(tb, vocab, max_len);
  out.key_a = record.knowledge_a;
  out.key_b = record.knowledge_b;
  out.label = record.label;
  out.group = record.group;
  out.length = ta.size() + tb.size();
  return out;
}

std::vector<EncodedPair> encode_dataset(std::span<const DatasetRecord> records,
                                        const Vocabulary& vocab,
                                        std::size_t max_len) {
  std::vector<EncodedPair> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(encode_record(r, vocab, max_len));
  return out;
}

Gradients zero_gradients(const ModelParams& params) {
  Gradients out;
  for (const Tensor* t : params.tensors()) out.emplace_back(t->shape());
  return out;
}

PoolShape pool_shape(const TrainConfig& config) {
  return {config.pool_window[0], config.pool_window[1], config.pool_stride[0],
          config.pool_stride[1]};
}

Var extract_features(const SimilarityMatrixSet& maps, Var kernels, Var biases,
                     PoolShape pool) {
  std::vector<Var> channels = maps.enabled();
  Var image = stack_channels(channels);
  Var pooled = maxpool2d(conv2d_valid(image, kernels, biases, Activation::kRelu),
                         pool);
  return reshape(pooled, {1, pooled.value().size()});
}

Var score(Var v, Var w1, Var b4, Var w2, Var b5) {
  Var hidden = tanh(add_row(matmul_nt(v, w1), b4));
  return softmax(add_row(matmul_nt(hidden, w2), b5));
}

namespace {

// Binds model parameters into one graph and routes their gradients back
// into a Gradients set after backward.
class Binder {
 public:
  Binder(Graph& g, const Model& model, bool track) : g_(g), track_(track) {
    const auto tensors = model.params.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) index_[tensors[i]] = i;
  }

  Var param(const Tensor& t) {
    auto it = bound_.find(&t);
    if (it != bound_.end()) return it->second;
    Var v = track_ ? g_.parameter(t) : g_.constant(t);
    bound_.emplace(&t, v);
    return v;
  }

  // Rows of `table` as a [rows x d] leaf.
  Var gather(const Tensor& table, std::span<const std::size_t> rows,
             bool trainable) {
    const std::size_t d = table.dim(1);
    Tensor out({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy_n(table.data() + rows[i] * d, d, out.data() + i * d);
    }
    if (!track_ || !trainable) return g_.constant(std::move(out));
    Var v = g_.input(std::move(out));
    gathered_.push_back({v, index_.at(&table), {rows.begin(), rows.end()}});
    return v;
  }

  void collect(Gradients& grads) const {
    for (const auto& [t, v] : bound_) {
      if (const Tensor* gr = v.grad()) grads[index_.at(t)].add(*gr);
    }
    for (const auto& g : gathered_) {
      const Tensor* gr = g.var.grad();
      if (!gr) continue;
      Tensor& dst = grads[g.param];
      const std::size_t d = dst.dim(1);
      for (std::size_t i = 0; i < g.rows.size(); ++i) {
        double* row = dst.data() + g.rows[i] * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += gr->at(i, j);
      }
    }
  }

 private:
  struct Gathered {
    Var var;
    std::size_t param;
    std::vector<std::size_t> rows;
  };

  Graph& g_;
  bool track_;
  std::unordered_map<const Tensor*, std::size_t> index_;
  std::unordered_map<const Tensor*, Var> bound_;
  std::vector<Gathered> gathered_;
};

GruVars bind_gru(Binder& b, const GruParams& p) {
  return {b.param(p.w_z), b.param(p.w_r), b.param(p.w_h),
          b.param(p.u_z), b.param(p.u_r), b.param(p.u_h)};
}

Var embed(Binder& b, const Model& model, const TokenSequence& seq) {
  std::vector<std::size_t> rows(seq.ids.begin(), seq.ids.end());
  return b.gather(model.params.embeddings, rows,
                  !model.config.freeze_embeddings);
}

Var knowledge_vector(Binder& b, Graph& g, const Model& model,
                     const std::string& key) {
  const KnowledgeTable& table = model.params.knowledge;
  if (auto i = table.index(key)) {
    const std::size_t rows[] = {*i};
    return b.gather(table.vectors(), rows, !model.config.freeze_knowledge);
  }
  return g.constant(Tensor({1, model.config.d}));
}

SimilarityMatrixSet channels_for(Binder& b, Graph& g, const Model& model,
                                 const EncodedPair& pair) {
  const TrainConfig& c = model.config;
  const ModelParams& p = model.params;
  if (pair.a.ids.size() != c.max_len || pair.b.ids.size() != c.max_len) {
    throw ShapeError("forward: pair is not padded to max_len " +
                     std::to_string(c.max_len));
  }
  for (const auto* seq : {&pair.a, &pair.b})
    for (TokenId id : seq->ids)
      if (id < 0 || static_cast<std::size_t>(id) >= model.vocab.size()) {
        throw std::out_of_range("forward: token id " + std::to_string(id) +
                                " outside the vocabulary");
      }

  ChannelInputs in;
  in.ex = embed(b, model, pair.a);
  in.ey = embed(b, model, pair.b);
  ChannelVars vars;
  if (c.channels[2]) {
    in.kx = knowledge_vector(b, g, model, pair.key_a);
    in.ky = knowledge_vector(b, g, model, pair.key_b);
    vars.gate_w = b.param(p.gate.w_k);
    vars.gate_u = b.param(p.gate.u_k);
    vars.knowledge_fwd = bind_gru(b, p.knowledge_gru.forward);
    vars.knowledge_bwd = bind_gru(b, p.knowledge_gru.backward);
    vars.knowledge_w = b.param(p.knowledge_match.w);
    vars.knowledge_b = b.param(p.knowledge_match.b);
  }
  if (c.channels[1]) {
    vars.context_fwd = bind_gru(b, p.context_gru.forward);
    vars.context_bwd = bind_gru(b, p.context_gru.backward);
    vars.context_w = b.param(p.context_match.w);
    vars.context_b = b.param(p.context_match.b);
  }
  return build_channels(in, vars, c.channels, c.activation);
}

Var features_for(Binder& b, Graph& g, const Model& model,
                 const EncodedPair& pair) {
  const ModelParams& p = model.params;
  SimilarityMatrixSet maps = channels_for(b, g, model, pair);
  return extract_features(maps, b.param(p.conv.kernels),
                          b.param(p.conv.biases), pool_shape(model.config));
}

Var probs_for(Binder& b, Graph& g, const Model& model, const EncodedPair& pair,
              Mode mode, std::mt19937_64* rng) {
  const TrainConfig& c = model.config;
  const MlpParams& mlp = model.params.mlp;
  Var v = features_for(b, g, model, pair);
  if (mode == Mode::kTrain && c.dropout > 0.0) {
    if (!rng) throw std::invalid_argument("forward: train mode needs an rng");
    v = mul(v, g.constant(dropout_mask(v.value().size(), c.dropout, *rng)));
  }
  return score(v, b.param(mlp.w1), b.param(mlp.b4), b.param(mlp.w2),
               b.param(mlp.b5));
}

}  // namespace

Tensor similarity_image(const Model& model, const EncodedPair& pair) {
  Graph g;
  Binder b(g, model, false);
  return stack_channels(channels_for(b, g, model, pair).enabled()).value();
}

Tensor feature_vector(const Model& model, const EncodedPair& pair) {
  Graph g;
  Binder b(g, model, false);
  return features_for(b, g, model, pair).value();
}

Tensor predict(const Model& model, const EncodedPair& pair) {
  Graph g;
  Binder b(g, model, false);
  return probs_for(b, g, model, pair, Mode::kInfer, nullptr).value();
}

double example_loss(const Model& model, const EncodedPair& pair, Mode mode,
                    std::mt19937_64* rng, Gradients* grads, double seed) {
  if (pair.label < 0 || static_cast<std::size_t>(pair.label) >= model.config.C) {
    throw std::out_of_range("label " + std::to_string(pair.label) +
                            " outside [0," + std::to_string(model.config.C) +
                            ")");
  }
  Graph g;
  Binder b(g, model, grads != nullptr);
  Var probs = probs_for(b, g, model, pair, mode, rng);
  Var loss = neg_log(probs, static_cast<std::size_t>(pair.label));
  if (grads) {
    g.backward(loss, seed);
    b.collect(*grads);
  }
  return loss.value()[0];
}

}  // namespace kehnn
