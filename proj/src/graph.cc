#include "kehnn/graph.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kehnn {

Activation parse_activation(std::string_view name) {
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation '" + std::string(name) +
                              "' (expected sigmoid, tanh or relu)");
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
  }
  return "?";
}

const Tensor& Var::value() const { return graph_->value(*this); }
const Tensor* Var::grad() const { return graph_->grad(*this); }

Var Graph::leaf(Tensor t, const Tensor* borrowed, bool requires_grad) {
  Node node;
  node.owned = std::move(t);
  node.borrowed = borrowed;
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor t) { return leaf(std::move(t), nullptr, false); }
Var Graph::input(Tensor t) { return leaf(std::move(t), nullptr, true); }
Var Graph::parameter(const Tensor& t) { return leaf(Tensor(), &t, true); }

const Tensor& Graph::value(Var v) const { return nodes_[v.id_].value(); }

const Tensor* Graph::grad(Var v) const {
  const auto& g = nodes_[v.id_].grad;
  return g ? &*g : nullptr;
}

Var Graph::record(std::string_view op, Tensor value, std::vector<Var> inputs,
                  BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite value in output " +
                       shape_str(value.shape()));
  }
  Node node;
  node.owned = std::move(value);
  for (Var in : inputs) {
    if (in.graph_ != this) {
      throw std::invalid_argument(std::string(op) +
                                  ": operand belongs to another graph");
    }
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var loss, double seed) {
  const Tensor& out = value(loss);
  if (out.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_str(out.shape()));
  }
  std::vector<std::optional<Tensor>> pass(loss.id_ + 1);
  pass[loss.id_] = Tensor(out.shape(), seed);

  std::vector<Tensor*> slots;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!pass[id] || !node.requires_grad) continue;
    if (node.backward) {
      slots.assign(node.inputs.size(), nullptr);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        std::size_t in = node.inputs[k];
        if (!nodes_[in].requires_grad) continue;
        if (!pass[in]) pass[in] = Tensor(nodes_[in].value().shape());
        slots[k] = &*pass[in];
      }
      node.backward(node.value(), *pass[id], slots);
    }
  }
  for (std::size_t id = 0; id <= loss.id_; ++id) {
    if (!pass[id] || !nodes_[id].requires_grad) continue;
    auto& stored = nodes_[id].grad;
    if (stored) {
      stored->add(*pass[id]);
    } else {
      stored = std::move(pass[id]);
    }
  }
}

void Graph::zero_grad() {
  for (auto& node : nodes_) node.grad.reset();
}

namespace {

void require_matrix(const Tensor& t, const char* op) { require_rank(t, 2, op); }

template <typename F>
Var unary(const char* op, Var a, F&& f, Graph::BackwardFn backward) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.graph().record(op, std::move(y), {a}, std::move(backward));
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix(x, "matmul");
  require_matrix(y, "matmul");
  if (x.dim(1) != y.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ, " +
                     shape_str(x.shape()) + " x " + shape_str(y.shape()));
  }
  const std::size_t p = x.dim(0), q = x.dim(1), r = y.dim(1);
  Tensor out({p, r});
  for (std::size_t i = 0; i < p; ++i) {
    double* o = out.data() + i * r;
    for (std::size_t j = 0; j < q; ++j) {
      const double xij = x.at(i, j);
      const double* yj = y.data() + j * r;
      for (std::size_t k = 0; k < r; ++k) o[k] += xij * yj[k];
    }
  }
  return a.graph().record(
      "matmul", std::move(out), {a, b},
      [a, b, p, q, r](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
        const Tensor& x = a.value();
        const Tensor& y = b.value();
        if (in[0]) {
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) {
              double acc = 0.0;
              for (std::size_t k = 0; k < r; ++k) acc += g.at(i, k) * y.at(j, k);
              in[0]->at(i, j) += acc;
            }
        }
        if (in[1]) {
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) {
              const double xij = x.at(i, j);
              for (std::size_t k = 0; k < r; ++k)
                in[1]->at(j, k) += xij * g.at(i, k);
            }
        }
      });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix(x, "matmul_nt");
  require_matrix(y, "matmul_nt");
  if (x.dim(1) != y.dim(1)) {
    throw ShapeError("matmul_nt: inner dimensions differ, " +
                     shape_str(x.shape()) + " x " + shape_str(y.shape()) +
                     "^T");
  }
  const std::size_t p = x.dim(0), q = x.dim(1), r = y.dim(0);
  Tensor out({p, r});
  for (std::size_t i = 0; i < p; ++i) {
    const double* xi = x.data() + i * q;
    for (std::size_t k = 0; k < r; ++k) {
      const double* yk = y.data() + k * q;
      double acc = 0.0;
      for (std::size_t j = 0; j < q; ++j) acc += xi[j] * yk[j];
      out.at(i, k) = acc;
    }
  }
  return a.graph().record(
      "matmul_nt", std::move(out), {a, b},
      [a, b, p, q, r](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
        const Tensor& x = a.value();
        const Tensor& y = b.value();
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t k = 0; k < r; ++k) {
            const double gik = g.at(i, k);
            if (gik == 0.0) continue;
            if (in[0]) {
              double* dx = in[0]->data() + i * q;
              const double* yk = y.data() + k * q;
              for (std::size_t j = 0; j < q; ++j) dx[j] += gik * yk[j];
            }
            if (in[1]) {
              double* dy = in[1]->data() + k * q;
              const double* xi = x.data() + i * q;
              for (std::size_t j = 0; j < q; ++j) dy[j] += gik * xi[j];
            }
          }
      });
}

Var add(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "add");
  Tensor out = x;
  out.add(y);
  return a.graph().record("add", std::move(out), {a, b},
                          [](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
                            if (in[0]) in[0]->add(g);
                            if (in[1]) in[1]->add(g);
                          });
}

Var sub(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "sub");
  Tensor out = x;
  out.add(y, -1.0);
  return a.graph().record("sub", std::move(out), {a, b},
                          [](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
                            if (in[0]) in[0]->add(g);
                            if (in[1]) in[1]->add(g, -1.0);
                          });
}

Var mul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "mul");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return a.graph().record(
      "mul", std::move(out), {a, b},
      [a, b](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
        const Tensor& x = a.value();
        const Tensor& y = b.value();
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (in[0]) (*in[0])[i] += g[i] * y[i];
          if (in[1]) (*in[1])[i] += g[i] * x[i];
        }
      });
}

Var add_row(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix(x, "add_row");
  if (y.rank() != 2 || y.dim(0) != 1 || y.dim(1) != x.dim(1)) {
    throw ShapeError("add_row: cannot broadcast " + shape_str(y.shape()) +
                     " over rows of " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), k = x.dim(1);
  Tensor out = x;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out.at(i, j) += y[j];
  return a.graph().record(
      "add_row", std::move(out), {a, b},
      [n, k](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
        if (in[0]) in[0]->add(g);
        if (in[1]) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) (*in[1])[j] += g.at(i, j);
        }
      });
}

Var add_scalar(Var a, Var s) {
  const Tensor& x = a.value();
  const Tensor& c = s.value();
  if (c.size() != 1) {
    throw ShapeError("add_scalar: expected one-element operand, got " +
                     shape_str(c.shape()));
  }
  Tensor out = x;
  for (double& v : out.values()) v += c[0];
  return a.graph().record("add_scalar", std::move(out), {a, s},
                          [](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
                            if (in[0]) in[0]->add(g);
                            if (in[1]) {
                              double acc = 0.0;
                              for (double v : g.values()) acc += v;
                              (*in[1])[0] += acc;
                            }
                          });
}

Var affine(Var a, double scale, double shift) {
  return unary(
      "affine", a, [scale, shift](double x) { return scale * x + shift; },
      [scale](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
        in[0]->add(g, scale);
      });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, sigmoid_scalar,
               [](const Tensor& y, const Tensor& g,
                  std::span<Tensor* const> in) {
                 for (std::size_t i = 0; i < g.size(); ++i)
                   (*in[0])[i] += g[i] * y[i] * (1.0 - y[i]);
               });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](const Tensor& y, const Tensor& g, std::span<Tensor* const> in) {
        for (std::size_t i = 0; i < g.size(); ++i)
          (*in[0])[i] += g[i] * (1.0 - y[i] * y[i]);
      });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](const Tensor& y, const Tensor& g, std::span<Tensor* const> in) {
        // y > 0 exactly when the input was > 0.
        for (std::size_t i = 0; i < g.size(); ++i)
          if (y[i] > 0.0) (*in[0])[i] += g[i];
      });
}

Var activate(Var a, Activation kind) {
  switch (kind) {
    case Activation::kSigmoid:
      return sigmoid(a);
    case Activation::kTanh:
      return tanh(a);
    case Activation::kRelu:
      return relu(a);
  }
  throw std::invalid_argument("activate: bad activation");
}

Var softmax(Var a) {
  const Tensor& x = a.value();
  if (x.empty()) throw ShapeError("softmax: empty input");
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : x.values()) hi = std::max(hi, v);
  Tensor out(x.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - hi);
    total += out[i];
  }
  for (double& v : out.values()) v /= total;
  return a.graph().record(
      "softmax", std::move(out), {a},
      [](const Tensor& y, const Tensor& g, std::span<Tensor* const> in) {
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
        for (std::size_t i = 0; i < g.size(); ++i)
          (*in[0])[i] += y[i] * (g[i] - dot);
      });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return a.graph().record(
      "sum", Tensor::scalar(total), {a},
      [](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
        for (double& v : in[0]->values()) v += g[0];
      });
}

Var neg_log(Var p, std::size_t index, double floor) {
  const Tensor& x = p.value();
  if (index >= x.size()) {
    throw std::out_of_range("neg_log: index " + std::to_string(index) +
                            " outside " + shape_str(x.shape()));
  }
  const double prob = x[index];
  const bool clamped = !(prob > floor);
  Tensor out = Tensor::scalar(-std::log(clamped ? floor : prob));
  return p.graph().record(
      "neg_log", std::move(out), {p},
      [index, prob, clamped](const Tensor&, const Tensor& g,
                             std::span<Tensor* const> in) {
        if (!clamped) (*in[0])[index] -= g[0] / prob;
      });
}

Var row(Var a, std::size_t i) {
  const Tensor& x = a.value();
  require_matrix(x, "row");
  if (i >= x.dim(0)) {
    throw std::out_of_range("row: index " + std::to_string(i) + " outside " +
                            shape_str(x.shape()));
  }
  const std::size_t n = x.dim(1);
  Tensor out({1, n});
  std::copy_n(x.data() + i * n, n, out.data());
  return a.graph().record(
      "row", std::move(out), {a},
      [i, n](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
        double* dst = in[0]->data() + i * n;
        for (std::size_t j = 0; j < n; ++j) dst[j] += g[j];
      });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const std::size_t n = rows.front().value().size();
  Tensor out({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& r = rows[i].value();
    if (r.rank() != 2 || r.dim(0) != 1 || r.dim(1) != n) {
      throw ShapeError("stack_rows: row " + std::to_string(i) + " has shape " +
                       shape_str(r.shape()) + ", expected [1x" +
                       std::to_string(n) + "]");
    }
    std::copy_n(r.data(), n, out.data() + i * n);
  }
  std::vector<Var> inputs(rows.begin(), rows.end());
  Graph& g = rows.front().graph();
  return g.record(
      "stack_rows", std::move(out), std::move(inputs),
      [n](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
        for (std::size_t i = 0; i < in.size(); ++i) {
          if (!in[i]) continue;
          const double* src = g.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) (*in[i])[j] += src[j];
        }
      });
}

Var concat_cols(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix(x, "concat_cols");
  require_matrix(y, "concat_cols");
  if (x.dim(0) != y.dim(0)) {
    throw ShapeError("concat_cols: row counts differ, " +
                     shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  }
  const std::size_t rows = x.dim(0), p = x.dim(1), q = y.dim(1);
  Tensor out({rows, p + q});
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy_n(x.data() + i * p, p, out.data() + i * (p + q));
    std::copy_n(y.data() + i * q, q, out.data() + i * (p + q) + p);
  }
  return a.graph().record(
      "concat_cols", std::move(out), {a, b},
      [rows, p, q](const Tensor&, const Tensor& g,
                   std::span<Tensor* const> in) {
        for (std::size_t i = 0; i < rows; ++i) {
          const double* src = g.data() + i * (p + q);
          if (in[0])
            for (std::size_t j = 0; j < p; ++j) in[0]->at(i, j) += src[j];
          if (in[1])
            for (std::size_t j = 0; j < q; ++j) in[1]->at(i, j) += src[p + j];
        }
      });
}

Var stack_channels(std::span<const Var> maps) {
  if (maps.empty()) throw ShapeError("stack_channels: no channels");
  const Shape& first = maps.front().shape();
  if (first.size() != 2) {
    throw ShapeError("stack_channels: expected matrices, got " +
                     shape_str(first));
  }
  const std::size_t plane = first[0] * first[1];
  Tensor out({maps.size(), first[0], first[1]});
  for (std::size_t c = 0; c < maps.size(); ++c) {
    if (maps[c].shape() != first) {
      throw ShapeError("stack_channels: channel " + std::to_string(c) +
                       " has shape " + shape_str(maps[c].shape()) +
                       ", expected " + shape_str(first));
    }
    std::copy_n(maps[c].value().data(), plane, out.data() + c * plane);
  }
  std::vector<Var> inputs(maps.begin(), maps.end());
  return maps.front().graph().record(
      "stack_channels", std::move(out), std::move(inputs),
      [plane](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
        for (std::size_t c = 0; c < in.size(); ++c) {
          if (!in[c]) continue;
          const double* src = g.data() + c * plane;
          for (std::size_t j = 0; j < plane; ++j) (*in[c])[j] += src[j];
        }
      });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value();
  out.reshape(std::move(shape));
  return a.graph().record(
      "reshape", std::move(out), {a},
      [](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
        for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i];
      });
}

Var conv2d(Var input, Var kernels, Var biases) {
  const Tensor& x = input.value();
  const Tensor& k = kernels.value();
  const Tensor& b = biases.value();
  require_rank(x, 3, "conv2d input");
  require_rank(k, 4, "conv2d kernels");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  const std::size_t maps = k.dim(0), kr = k.dim(2), kc = k.dim(3);
  if (k.dim(1) != channels) {
    throw ShapeError("conv2d: kernels " + shape_str(k.shape()) +
                     " do not match input channels of " +
                     shape_str(x.shape()));
  }
  if (b.size() != maps) {
    throw ShapeError("conv2d: biases " + shape_str(b.shape()) +
                     " do not match " + std::to_string(maps) + " maps");
  }
  if (kr > height || kc > width) {
    throw ShapeError("conv2d: kernel window " + std::to_string(kr) + "x" +
                     std::to_string(kc) + " larger than input " +
                     shape_str(x.shape()));
  }
  const std::size_t oh = height - kr + 1, ow = width - kc + 1;
  Tensor out({maps, oh, ow});
  for (std::size_t f = 0; f < maps; ++f)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t s = 0; s < kr; ++s) {
            const double* w = k.data() + ((f * channels + c) * kr + s) * kc;
            const double* z = x.data() + (c * height + i + s) * width + j;
            for (std::size_t t = 0; t < kc; ++t) acc += w[t] * z[t];
          }
        out.at(f, i, j) = acc + b[f];
      }
  return input.graph().record(
      "conv2d", std::move(out), {input, kernels, biases},
      [input, kernels, channels, height, width, maps, kr, kc, oh, ow](
          const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
        const Tensor& x = input.value();
        const Tensor& k = kernels.value();
        for (std::size_t f = 0; f < maps; ++f)
          for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
              const double gij = g.at(f, i, j);
              if (in[2]) (*in[2])[f] += gij;
              if (gij == 0.0) continue;
              for (std::size_t c = 0; c < channels; ++c)
                for (std::size_t s = 0; s < kr; ++s) {
                  const std::size_t koff = ((f * channels + c) * kr + s) * kc;
                  const std::size_t xoff = (c * height + i + s) * width + j;
                  for (std::size_t t = 0; t < kc; ++t) {
                    if (in[0]) (*in[0])[xoff + t] += gij * k[koff + t];
                    if (in[1]) (*in[1])[koff + t] += gij * x[xoff + t];
                  }
                }
            }
      });
}

Var conv2d_valid(Var input, Var kernels, Var biases, Activation act) {
  return activate(conv2d(input, kernels, biases), act);
}

std::size_t pooled_extent(std::size_t extent, std::size_t window,
                          std::size_t stride) {
  if (window == 0 || stride == 0) {
    throw std::invalid_argument("pooling window and stride must be positive");
  }
  if (window > extent) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) +
                     " exceeds input extent " + std::to_string(extent));
  }
  return (extent - window) / stride + 1;
}

Var maxpool2d(Var input, PoolShape pool) {
  const Tensor& x = input.value();
  require_rank(x, 3, "maxpool2d");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  const std::size_t oh =
      pooled_extent(height, pool.window_rows, pool.stride_rows);
  const std::size_t ow = pooled_extent(width, pool.window_cols, pool.stride_cols);
  Tensor out({channels, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (c * height + i * pool.stride_rows) * width +
                           j * pool.stride_cols;
        for (std::size_t s = 0; s < pool.window_rows; ++s)
          for (std::size_t t = 0; t < pool.window_cols; ++t) {
            std::size_t idx = (c * height + i * pool.stride_rows + s) * width +
                              j * pool.stride_cols + t;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (c * oh + i) * ow + j;
        out[o] = x[best];
        argmax[o] = best;
      }
  return input.graph().record(
      "maxpool2d", std::move(out), {input},
      [argmax = std::move(argmax)](const Tensor&, const Tensor& g,
                                   std::span<Tensor* const> in) {
        for (std::size_t o = 0; o < g.size(); ++o) (*in[0])[argmax[o]] += g[o];
      });
}

}  // namespace kehnn
