#include "kehnn/encoder.h"

#include <vector>

namespace kehnn {

GruParams GruParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  GruParams p;
  p.w_z = p.w_r = p.w_h = Tensor({hidden_dim, input_dim});
  p.u_z = p.u_r = p.u_h = Tensor({hidden_dim, hidden_dim});
  return p;
}

GruVars bind_constants(Graph& g, const GruParams& p) {
  return {g.constant(p.w_z), g.constant(p.w_r), g.constant(p.w_h),
          g.constant(p.u_z), g.constant(p.u_r), g.constant(p.u_h)};
}

namespace {

void check_params(const GruVars& p, const char* op) {
  const std::size_t m = p.w_z.shape().at(0), d = p.w_z.shape().at(1);
  for (Var w : {p.w_r, p.w_h}) {
    if (w.shape() != Shape{m, d}) {
      throw ShapeError(std::string(op) + ": input matrix " +
                       shape_str(w.shape()) + " differs from " +
                       shape_str({m, d}));
    }
  }
  for (Var u : {p.u_z, p.u_r, p.u_h}) {
    if (u.shape() != Shape{m, m}) {
      throw ShapeError(std::string(op) + ": recurrent matrix " +
                       shape_str(u.shape()) + " is not " + shape_str({m, m}));
    }
  }
}

// Step with the input projections already computed, each [1 x m].
Var step(Var xz, Var xr, Var xh, Var h_prev, const GruVars& p) {
  Var z = sigmoid(add(xz, matmul_nt(h_prev, p.u_z)));
  Var r = sigmoid(add(xr, matmul_nt(h_prev, p.u_r)));
  Var c = tanh(add(xh, matmul_nt(mul(r, h_prev), p.u_h)));
  return add(mul(z, c), mul(affine(z, -1.0, 1.0), h_prev));
}

}  // namespace

Var gru_step(Var x, Var h_prev, const GruVars& p) {
  check_params(p, "gru_step");
  const std::size_t m = p.w_z.shape()[0];
  if (h_prev.shape() != Shape{1, m}) {
    throw ShapeError("gru_step: state " + shape_str(h_prev.shape()) +
                     " is not " + shape_str({1, m}));
  }
  return step(matmul_nt(x, p.w_z), matmul_nt(x, p.w_r), matmul_nt(x, p.w_h),
              h_prev, p);
}

Var gru_sequence(Var seq, const GruVars& p, bool reverse) {
  check_params(p, "gru_sequence");
  require_rank(seq.value(), 2, "gru_sequence");
  const std::size_t len = seq.shape()[0];
  if (len == 0) throw ShapeError("gru_sequence: empty sequence");
  const std::size_t m = p.w_z.shape()[0];

  Var xz = matmul_nt(seq, p.w_z);
  Var xr = matmul_nt(seq, p.w_r);
  Var xh = matmul_nt(seq, p.w_h);
  Var h = seq.graph().constant(Tensor({1, m}));
  std::vector<Var> states(len);
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t i = reverse ? len - 1 - t : t;
    h = step(row(xz, i), row(xr, i), row(xh, i), h, p);
    states[i] = h;
  }
  return stack_rows(states);
}

Var bigru_encode(Var seq, const GruVars& fwd, const GruVars& bwd) {
  return concat_cols(gru_sequence(seq, fwd, false),
                     gru_sequence(seq, bwd, true));
}

}  // namespace kehnn
