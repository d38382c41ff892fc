#ifndef KEHNN_MATCHER_H_
#define KEHNN_MATCHER_H_

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kehnn/channels.h"
#include "kehnn/config.h"
#include "kehnn/encoder.h"
#include "kehnn/knowledge.h"
#include "kehnn/tensor.h"
#include "kehnn/text.h"

namespace kehnn {

struct GateParams {
  Tensor w_k;  // [d x d]
  Tensor u_k;  // [d x d]
};

struct ConvParams {
  Tensor kernels;  // [F x channels x rw x rh]
  Tensor biases;   // [F]
};

// Two-layer scorer: softmax(W2 tanh(W1 v + b4) + b5).
struct MlpParams {
  Tensor w1;  // [hidden x feature_dim]
  Tensor b4;  // [1 x hidden]
  Tensor w2;  // [C x hidden]
  Tensor b5;  // [1 x C]
};

enum class ParamGroup {
  kEmbedding,
  kKnowledge,
  kGate,
  kContextGru,
  kKnowledgeGru,
  kContextBilinear,
  kKnowledgeBilinear,
  kConv,
  kMlp,
};

std::string_view group_name(ParamGroup group);

struct ParamRef {
  std::string name;
  Tensor* tensor;
  ParamGroup group;
  // Skipped by the optimizer.
  bool frozen = false;
  // Row 0 is never updated (the padding embedding).
  bool pin_first_row = false;
};

// Every trainable array. The x and y sides of a pair share all of them.
struct ModelParams {
  Tensor embeddings;  // [|V| x d]
  KnowledgeTable knowledge;
  GateParams gate;
  BiGruParams context_gru;    // channel two
  BiGruParams knowledge_gru;  // channel three
  BilinearParams context_match;
  BilinearParams knowledge_match;
  ConvParams conv;
  MlpParams mlp;

  // Stable order used by gradients, the optimizer and checkpoints.
  std::vector<ParamRef> refs(const TrainConfig& config);
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> names() const;
};

struct Model {
  TrainConfig config;
  Vocabulary vocab;
  ModelParams params;
};

// Draws all weights uniformly from [-init_scale, init_scale] (biases zero)
// in a fixed order. `embeddings` must be [|vocab| x d]; `knowledge` must
// have dimension d (or be empty).
Model init_model(const TrainConfig& config, Vocabulary vocab, Tensor embeddings,
                 KnowledgeTable knowledge, std::mt19937_64& rng);

// Checks every shape relation between config, vocabulary and parameters.
void validate_model(const Model& model);

// A dataset record mapped through a vocabulary.
struct EncodedPair {
  TokenSequence a;
  TokenSequence b;
  std::string key_a;
  std::string key_b;
  int label = 0;
  std::string group;
  // Token count of text_a plus text_b before truncation.
  std::size_t length = 0;
};

EncodedPair encode_record(const DatasetRecord& record, const Vocabulary& vocab,
                          std::size_t max_len);
std::vector<EncodedPair> encode_dataset(std::span<const DatasetRecord> records,
                                        const Vocabulary& vocab,
                                        std::size_t max_len);

// One gradient tensor per ParamRef, same order.
using Gradients = std::vector<Tensor>;
Gradients zero_gradients(const ModelParams& params);

// Stacks the enabled matrices as input channels, applies one valid
// convolution with relu and one max pool, and flattens to [1 x n].
Var extract_features(const SimilarityMatrixSet& maps, Var kernels, Var biases,
                     PoolShape pool);
// softmax(w2 tanh(w1 v + b4) + b5) for v [1 x n].
Var score(Var v, Var w1, Var b4, Var w2, Var b5);

PoolShape pool_shape(const TrainConfig& config);

enum class Mode { kTrain, kInfer };

// Conv input maps for a pair, one per enabled channel, as [channels x I x J].
Tensor similarity_image(const Model& model, const EncodedPair& pair);
// Flattened pooled feature vector v, [1 x feature_dim].
Tensor feature_vector(const Model& model, const EncodedPair& pair);
// Class distribution in inference mode.
Tensor predict(const Model& model, const EncodedPair& pair);

// -log p[label] for one pair. Train mode applies dropout from `rng`. When
// `grads` is given, seed * d(loss)/d(param) is added to it.
double example_loss(const Model& model, const EncodedPair& pair, Mode mode,
                    std::mt19937_64* rng, Gradients* grads, double seed = 1.0);

}  // namespace kehnn

#endif  // KEHNN_MATCHER_H_
