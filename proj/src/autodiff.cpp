#include "tpap/autodiff.hpp"

#include "tpap/error.hpp"

namespace tpap {

const Tensor& Var::value() const {
  if (!graph_) throw GraphError("var: not bound to a graph");
  return graph_->value(id_);
}

bool Var::requires_grad() const { return graph_ && graph_->requires_grad(id_); }

Var Graph::leaf(Tensor value, std::string name, bool requires_grad) {
  if (consumed_) throw GraphError("graph: cannot extend a graph after backward");
  Node n;
  n.op = "leaf";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (consumed_) throw GraphError("graph: cannot extend a graph after backward");
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  for (const auto& in : inputs) {
    if (&in.graph() != this) throw GraphError(n.op + ": input belongs to a different graph");
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

GradMap Graph::backward(Var loss) {
  if (&loss.graph() != this) throw GraphError("backward: loss belongs to a different graph");
  if (consumed_) throw GraphError("backward: graph already consumed; run a new forward pass");
  const Tensor& lv = nodes_.at(loss.id()).value;
  if (lv.numel() != 1) throw GraphError("backward: loss must be scalar, got shape " + shape_str(lv.shape()));
  consumed_ = true;

  Node& root = nodes_[loss.id()];
  root.grad = Tensor(lv.shape(), 1.0f);
  root.has_grad = true;

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    // Copy out: callbacks may grow other nodes' buffers but never this one.
    const Tensor g = n.grad;
    n.backward(*this, g);
  }

  GradMap out;
  for (const auto& n : nodes_) {
    if (n.op != "leaf" || !n.requires_grad || n.name.empty()) continue;
    out[n.name] = n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0f);
  }
  return out;
}

std::optional<Tensor> Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (!n.has_grad) return std::nullopt;
  return n.grad;
}

Tensor& Graph::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id());
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0f);
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::accumulate(Var v, const Tensor& delta) {
  if (!requires_grad(v.id())) return;
  Tensor& g = grad_buffer(v);
  if (g.numel() != delta.numel())
    throw ShapeError("accumulate: gradient " + shape_str(delta.shape()) + " vs value " + shape_str(g.shape()));
  float* dst = g.ptr();
  const float* src = delta.ptr();
  for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, float h) {
  if (!(h > 0.0f)) throw Error("finite_diff_grad: step h must be positive");
  Tensor grad(x.shape(), 0.0f);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const float orig = probe[i];
    const float hi = orig + h;
    const float lo = orig - h;
    probe[i] = hi;
    const double up = f(probe);
    probe[i] = lo;
    const double down = f(probe);
    probe[i] = orig;
    // Divide by the step actually realized in f32, which is 2h up to rounding.
    grad[i] = static_cast<float>((up - down) / (static_cast<double>(hi) - static_cast<double>(lo)));
  }
  return grad;
}

}  // namespace tpap
