#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hdas/tensor.hpp"

namespace hdas {

/// A learnable tensor living outside any single graph. Graphs bind to it via
/// Graph::parameter() and accumulate d(loss)/d(value) into `grad`.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(0.0); }
};

/// Tracked statistics of a batch-norm layer, used in eval mode.
struct RunningStats {
  Tensor mean;
  Tensor var;
  explicit RunningStats(int channels) : mean({channels}, 0.0), var({channels}, 1.0) {}
};

class Graph;

/// Handle to a node of a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient after Graph::backward(). Empty tensor when none flowed here.
  const Tensor& grad() const;

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Append-only tape. Topological order is insertion order; backward visits
/// nodes in exact reverse insertion order.
class Graph {
 public:
  struct Node;
  using BackwardFn = std::function<void(Graph&, const Node&)>;

  struct Node {
    const char* op = "";
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t);
  Var variable(Tensor t);
  Var parameter(Parameter& p);

  /// Records an op output. `fn` is kept only when some input requires grad.
  Var record(const char* op, std::vector<int> inputs, Tensor value, BackwardFn fn);

  /// Reverse sweep from a scalar loss. Parameter gradients are accumulated
  /// (+=) into Parameter::grad.
  void backward(Var loss);

  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  /// Grad buffer of node `id`, allocated zeroed on first access; nullptr when
  /// the node does not require grad.
  Tensor* grad_buffer(int id);

 private:
  std::deque<Node> nodes_;
};

struct Conv2dAttrs {
  int stride = 1;
  int dilation = 1;
  int groups = 1;
};

/// "Same" padding: output = ceil(in / stride), zeros split with the extra
/// element on the high side.
struct SamePad {
  int out;
  int lo;
};
SamePad same_padding(int in, int kernel, int stride, int dilation);

// Operators. Every op validates its input shapes and throws Error(kShape)
// naming the op and the offending dims.

/// x: [N,Cin,H,W], w: [Cout, Cin/groups, k, k].
Var conv2d(Var x, Var w, const Conv2dAttrs& attrs);
Var relu(Var x);
/// Per-channel batch norm over [N,C,H,W]. In training mode uses batch
/// statistics and updates `stats` with momentum 0.1; otherwise uses `stats`.
Var batch_norm(Var x, std::optional<Var> gamma, std::optional<Var> beta, RunningStats& stats,
               bool training, double momentum = 0.1, double eps = 1e-5);
Var avg_pool3x3(Var x, int stride);
Var max_pool3x3(Var x, int stride);
Var identity(Var x);
/// All-zero output of the shape a stride-`stride` op would produce.
Var zero_op(Var x, int stride);
Var concat_channels(const std::vector<Var>& xs);
/// Removes the first `top` rows and `left` columns of each plane.
Var crop(Var x, int top, int left);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_n(const std::vector<Var>& xs);
Var scale(Var x, double k);
Var add_scalar(Var x, double c);
/// out = sum_k w[index[k]] * xs[k]; w is a rank-1 tensor.
Var weighted_sum(const std::vector<Var>& xs, Var w, const std::vector<int>& index);
Var global_avg_pool(Var x);
/// x: [N,F], w: [O,F], b: [O].
Var linear(Var x, Var w, std::optional<Var> b);
Var softmax(Var x, int axis);
/// Mean over the batch of -log softmax(logits)[label].
Var cross_entropy(Var logits, const std::vector<int>& labels);
Var sum(Var x);
Var select(Var x, int index);
/// Row `r` of a rank-2 tensor as a rank-1 tensor.
Var row(Var x, int r);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  bool pass = false;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences, element-wise, with denominator max(|a|, |b|, 1e-8).
GradCheckReport grad_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x,
                           double eps = 1e-5, double tol = 1e-4);

}  // namespace hdas
