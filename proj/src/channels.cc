#include "kehnn/channels.h"

#include "kehnn/knowledge.h"

namespace kehnn {

Var word_channel(Var ex, Var ey, Activation h) {
  return activate(matmul_nt(ex, ey), h);
}

Var bilinear_channel(Var hx, Var hy, Var w, Var b, Activation h) {
  const Shape& ws = w.shape();
  if (ws.size() != 2 || ws[0] != ws[1]) {
    throw ShapeError("bilinear_channel: W " + shape_str(ws) + " is not square");
  }
  return activate(add_scalar(matmul_nt(matmul(hx, w), hy), b), h);
}

std::vector<Var> SimilarityMatrixSet::enabled() const {
  std::vector<Var> out;
  for (const auto& m : {m1, m2, m3})
    if (m) out.push_back(*m);
  return out;
}

SimilarityMatrixSet build_channels(const ChannelInputs& in,
                                   const ChannelVars& vars,
                                   const std::array<bool, 3>& enabled,
                                   Activation h) {
  SimilarityMatrixSet out;
  if (enabled[0]) out.m1 = word_channel(in.ex, in.ey, h);
  if (enabled[1]) {
    Var hx = bigru_encode(in.ex, vars.context_fwd, vars.context_bwd);
    Var hy = bigru_encode(in.ey, vars.context_fwd, vars.context_bwd);
    out.m2 = bilinear_channel(hx, hy, vars.context_w, vars.context_b, h);
  }
  if (enabled[2]) {
    Var gx = knowledge_gate(in.ex, in.kx, vars.gate_w, vars.gate_u);
    Var gy = knowledge_gate(in.ey, in.ky, vars.gate_w, vars.gate_u);
    Var ex = knowledge_enhance(in.ex, in.kx, gx);
    Var ey = knowledge_enhance(in.ey, in.ky, gy);
    Var kx = bigru_encode(ex, vars.knowledge_fwd, vars.knowledge_bwd);
    Var ky = bigru_encode(ey, vars.knowledge_fwd, vars.knowledge_bwd);
    out.m3 = bilinear_channel(kx, ky, vars.knowledge_w, vars.knowledge_b, h);
  }
  return out;
}

}  // namespace kehnn
