#ifndef KEHNN_ENCODER_H_
#define KEHNN_ENCODER_H_

#include <cstddef>
#include <random>

#include "kehnn/graph.h"
#include "kehnn/tensor.h"

namespace kehnn {

// Gated recurrent unit without bias terms. Input matrices are [m x d],
// recurrent matrices [m x m].
struct GruParams {
  Tensor w_z, w_r, w_h;
  Tensor u_z, u_r, u_h;

  static GruParams zeros(std::size_t input_dim, std::size_t hidden_dim);
  std::size_t input_dim() const { return w_z.dim(1); }
  std::size_t hidden_dim() const { return w_z.dim(0); }
};

struct BiGruParams {
  GruParams forward;
  GruParams backward;
};

// GruParams recorded as leaves of one graph.
struct GruVars {
  Var w_z, w_r, w_h;
  Var u_z, u_r, u_h;
};

GruVars bind_constants(Graph& g, const GruParams& p);

// One recurrence step for x [1 x d] and h_prev [1 x m]:
//   z = sigmoid(W_z x + U_z h_prev)
//   r = sigmoid(W_r x + U_r h_prev)
//   c = tanh(W_h x + U_h (r * h_prev))
//   h = z * c + (1 - z) * h_prev
Var gru_step(Var x, Var h_prev, const GruVars& p);

// Runs the recurrence over the rows of seq [L x d] from a zero state, left to
// right or right to left. Row i of the result is the state after reading
// position i.
Var gru_sequence(Var seq, const GruVars& p, bool reverse);

// [L x 2m]; row i is the forward state at i followed by the backward state
// at i.
Var bigru_encode(Var seq, const GruVars& fwd, const GruVars& bwd);

}  // namespace kehnn

#endif  // KEHNN_ENCODER_H_
