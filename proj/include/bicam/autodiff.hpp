#pragma once

// Tape-based reverse-mode automatic differentiation over bicam::Tensor.
//
// A Graph records every primitive applied to its Vars together with the
// forward values the backward rule needs. backward() walks the tape once in
// reverse. Graphs are single-threaded; use one Graph per forward pass.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "bicam/tensor.hpp"

namespace bicam::ad {

using NodeId = std::size_t;

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the Graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  NodeId id() const noexcept { return id_; }
  Graph& graph() const { return *graph_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = 0;
};

// Receives parent gradients from a node's backward rule.
class GradSink {
 public:
  virtual ~GradSink() = default;
  // Whether parent `i` needs a gradient at all; lets rules skip work.
  virtual bool wants(std::size_t parent) const = 0;
  virtual void add(std::size_t parent, const Tensor& grad) = 0;
};

using BackwardFn = std::function<void(const Tensor& out_grad, GradSink& sink)>;

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Input that gradients flow into.
  Var leaf(Tensor value);
  /// Input that gradients never flow into.
  Var constant(Tensor value);
  Var constant(std::shared_ptr<const Tensor> value);

  /// Records the result of a primitive. Throws NumericError if `value`
  /// contains NaN/Inf.
  Var record(std::string_view op, Tensor value, std::vector<Var> parents, BackwardFn backward);

  /// Reverse sweep from a scalar root. Replaces gradients from any earlier
  /// sweep on this graph.
  void backward(Var root);

  /// d root / d var from the last backward(); zeros when var is not an
  /// ancestor of the root.
  Tensor grad(Var var) const;
  bool has_grad(Var var) const;

  const Tensor& value(NodeId id) const { return *nodes_.at(id).value; }
  std::string_view op(NodeId id) const { return nodes_.at(id).op; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::string_view op;
    std::shared_ptr<const Tensor> value;
    std::vector<NodeId> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::optional<Tensor>> grads_;
};

// ---- primitives --------------------------------------------------------
// All primitives are differentiable in every Var argument.

/// a + b. `b` may also have a shape equal to a trailing suffix of a's shape,
/// in which case it is broadcast over the leading axes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

/// a[..., m, k] . b[k, n] or a[..., m, k] . b[..., k, n] (same leading dims).
Var matmul(Var a, Var b);

Var transpose(Var a, int axis1, int axis2);
Var reshape(Var a, Shape shape);
Var concat(std::span<const Var> parts, int axis);
Var slice(Var a, int axis, std::size_t begin, std::size_t end);
Var concat_last(std::span<const Var> parts);
Var slice_last(Var a, std::size_t begin, std::size_t end);

Var sum(Var a);
Var sum_axis(Var a, int axis);
Var mean_axis(Var a, int axis);
Var dot(Var a, Var b);

/// Softmax over the last axis at temperature T (T > 0), max-subtracted.
Var softmax(Var x, double temperature = 1.0);
Var layernorm(Var x, Var gain, Var bias, double eps = 1e-6);
/// Exact erf-form GELU.
Var gelu(Var x);

/// Mean cross-entropy of logits[B, C] against integer labels (size B).
Var cross_entropy(Var logits, std::span<const std::size_t> labels);

/// image[B, C, H, W] -> patches[B, (H/p)*(W/p), C*p*p]; patches are in
/// row-major grid order, features ordered (channel, row, col).
Var patchify(Var image, std::size_t patch);

// ---- plain (non-graph) helpers shared by several modules ----------------

Tensor softmax_values(const Tensor& x, double temperature);
Tensor permute_values(const Tensor& a, std::span<const std::size_t> perm);

}  // namespace bicam::ad
