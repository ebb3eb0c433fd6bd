#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tpap/tensor.hpp"

namespace tpap {

class Graph;

using NodeId = std::size_t;

/// Handle to a value recorded in a Graph. Cheap to copy; only valid while the
/// owning Graph is alive.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  NodeId id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = 0;
};

/// Gradients of named leaves, keyed by the name given to Graph::leaf.
using GradMap = std::map<std::string, Tensor>;

/// Tape of recorded operations for one forward pass.
///
/// Nodes are appended in execution order, so creation order is a topological
/// order. backward() walks it in reverse and accumulates gradients of nodes
/// used more than once by summation in that fixed order. A graph supports one
/// backward pass; a second call throws GraphError.
///
/// Single-owner: a Graph must not be shared between threads.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Adds an input or parameter. Named leaves that require grad show up in the
  /// map returned by backward().
  Var leaf(Tensor value, std::string name = {}, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value)); }

  /// Records an op node. `backward` is dropped when no input requires grad.
  Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse pass from a scalar (single-element) loss.
  GradMap backward(Var loss);

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  const std::string& op(NodeId id) const { return nodes_.at(id).op; }

  /// Gradient buffer of a node after backward(); nullopt when never reached.
  std::optional<Tensor> grad(Var v) const;

  /// Adds `delta` into the gradient buffer of `v` (allocating it on first use).
  /// Only meaningful inside backward callbacks.
  void accumulate(Var v, const Tensor& delta);
  /// Mutable gradient buffer for in-place accumulation by op callbacks.
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    std::string op;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::string name;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Central finite-difference estimate of d f / d x, one coordinate at a time:
/// (f(x + h e_i) - f(x - h e_i)) / (2h). The denominator is the f32-realized
/// step, and f returns double so a double-precision oracle keeps its accuracy.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, float h);

}  // namespace tpap
