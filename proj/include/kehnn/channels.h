#ifndef KEHNN_CHANNELS_H_
#define KEHNN_CHANNELS_H_

#include <array>
#include <optional>
#include <vector>

#include "kehnn/encoder.h"
#include "kehnn/graph.h"
#include "kehnn/tensor.h"

namespace kehnn {

// h(x^T W y + b) similarity over BiGRU states; W is [2m x 2m], b is [1].
struct BilinearParams {
  Tensor w;
  Tensor b = Tensor::scalar(0.0);
};

// M1[i,j] = h(ex_i . ey_j)
Var word_channel(Var ex, Var ey, Activation h);

// M[i,j] = h(hx_i^T W hy_j + b)
Var bilinear_channel(Var hx, Var hy, Var w, Var b, Activation h);

// Graph handles for everything the three channels read.
struct ChannelVars {
  Var gate_w;  // W_k
  Var gate_u;  // U_k
  GruVars context_fwd, context_bwd;
  GruVars knowledge_fwd, knowledge_bwd;
  Var context_w, context_b;
  Var knowledge_w, knowledge_b;
};

struct ChannelInputs {
  Var ex, ey;  // embeddings [I x d], [J x d]
  Var kx, ky;  // knowledge vectors [1 x d]
};

// M1 from embeddings, M2 from the context BiGRU, M3 from the second BiGRU
// over knowledge-enhanced embeddings. Disabled channels are not computed.
struct SimilarityMatrixSet {
  std::optional<Var> m1, m2, m3;

  // The enabled matrices in channel order.
  std::vector<Var> enabled() const;
};

SimilarityMatrixSet build_channels(const ChannelInputs& in,
                                   const ChannelVars& vars,
                                   const std::array<bool, 3>& enabled,
                                   Activation h);

}  // namespace kehnn

#endif  // KEHNN_CHANNELS_H_
