#ifndef KEHNN_GRAPH_H_
#define KEHNN_GRAPH_H_

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kehnn/tensor.h"

namespace kehnn {

enum class Activation { kSigmoid, kTanh, kRelu };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);

class Graph;

// Handle to a tensor recorded in a Graph. Cheap to copy; valid while the
// graph is alive.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  // Accumulated gradient, or nullptr when backward never reached this tensor.
  const Tensor* grad() const;

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Computation record for reverse-mode differentiation. Operations append
// nodes in evaluation order, so node ids are a topological order and the
// backward pass is a single reverse sweep.
//
// A graph is confined to one thread. Parameter leaves borrow their tensor;
// the caller keeps it alive and unchanged until the graph is discarded.
class Graph {
 public:
  // Receives the output value, its gradient, and one gradient slot per input;
  // a slot is null when that input does not need a gradient.
  using BackwardFn = std::function<void(const Tensor& out, const Tensor& grad,
                                        std::span<Tensor* const> in)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t);
  Var input(Tensor t);
  Var parameter(const Tensor& t);

  const Tensor& value(Var v) const;
  const Tensor* grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Propagates d(seed * loss) to every reachable node and adds it to the
  // stored gradients. Repeated calls accumulate.
  void backward(Var loss, double seed = 1.0);
  void zero_grad();

  // Appends an operation result. Throws NumericError if value is not finite.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs,
             BackwardFn backward);

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::optional<Tensor> grad;

    const Tensor& value() const { return borrowed ? *borrowed : owned; }
  };

  Var leaf(Tensor t, const Tensor* borrowed, bool requires_grad);

  std::deque<Node> nodes_;  // value() references must survive growth
};

// Matrix product of a [p x q] and b [q x r].
Var matmul(Var a, Var b);
// a [p x q] times the transpose of b [r x q].
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
// Elementwise product.
Var mul(Var a, Var b);
// a [n x k] plus the row vector b [1 x k] on every row.
Var add_row(Var a, Var b);
// a plus a one-element tensor s on every entry.
Var add_scalar(Var a, Var s);
// scale * a + shift.
Var affine(Var a, double scale, double shift);

Var sigmoid(Var a);
Var tanh(Var a);
// Subgradient at 0 is 0.
Var relu(Var a);
Var activate(Var a, Activation kind);

// Softmax over all entries, stabilized by subtracting the max.
Var softmax(Var a);
// Sum of all entries as a [1] tensor.
Var sum(Var a);
// -log(max(p[index], floor)) as a [1] tensor.
Var neg_log(Var p, std::size_t index, double floor = 1e-12);

// Row i of a matrix, as [1 x n].
Var row(Var a, std::size_t i);
Var stack_rows(std::span<const Var> rows);
Var concat_cols(Var a, Var b);
// Stacks equally shaped [H x W] matrices into [C x H x W].
Var stack_channels(std::span<const Var> maps);
Var reshape(Var a, Shape shape);

// Valid cross-correlation with unit stride. input [C x H x W], kernels
// [F x C x rw x rh], biases [F]. Output [F x (H-rw+1) x (W-rh+1)], no
// activation.
Var conv2d(Var input, Var kernels, Var biases);
// conv2d followed by the activation.
Var conv2d_valid(Var input, Var kernels, Var biases, Activation act);

struct PoolShape {
  std::size_t window_rows;
  std::size_t window_cols;
  std::size_t stride_rows;
  std::size_t stride_cols;
};

// Per-channel max over windows of [C x H x W]; trailing partial windows are
// dropped. Ties route the gradient to the first element in row-major order.
Var maxpool2d(Var input, PoolShape pool);

// Extent of a pooled axis.
std::size_t pooled_extent(std::size_t extent, std::size_t window,
                          std::size_t stride);

}  // namespace kehnn

#endif  // KEHNN_GRAPH_H_
