#include "mgvae/autodiff.hpp"

#include "mgvae/error.hpp"

namespace mgvae::ad {

const Graph::Node& Graph::node(Var v) const {
  if (v.graph_ != this || v.id_ >= nodes_.size()) {
    throw std::invalid_argument("autodiff: variable does not belong to this graph");
  }
  return nodes_[v.id_];
}

Graph::Node& Graph::node(Var v) {
  return const_cast<Node&>(static_cast<const Graph&>(*this).node(v));
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::reference(const Tensor& value, bool requires_grad) {
  Node n;
  n.external = &value;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const auto& in : inputs) {
    if (node(in).requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Tensor Graph::grad(Var v) const {
  const auto& n = node(v);
  if (!n.grad.empty()) return n.grad;
  const auto& val = value(v);
  return Tensor(val.rows(), val.cols());
}

Tensor& Graph::grad_buffer(Var v) {
  auto& n = node(v);
  if (n.grad.empty()) {
    const auto& val = n.external ? *n.external : n.value;
    n.grad = Tensor(val.rows(), val.cols());
  }
  return n.grad;
}

void Graph::backward(Var loss) {
  const auto& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward", "loss must be a scalar, got " + shape_string(lv));
  }
  if (!requires_grad(loss)) return;
  grad_buffer(loss)[0] += 1;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.external ? *n.external : n.value, n.grad);
  }
}

void Graph::zero_grad() {
  for (auto& n : nodes_) n.grad = Tensor();
}

}  // namespace mgvae::ad
