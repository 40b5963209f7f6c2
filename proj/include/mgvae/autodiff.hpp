#pragma once

#include "mgvae/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <span>

namespace mgvae::ad {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  friend class Graph;
  Var(Graph* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so the
// node list is always topologically sorted and backward() is a reverse sweep.
class Graph {
 public:
  // Receives the node's output value and the gradient of the loss w.r.t. it,
  // and accumulates into the gradients of the node's inputs.
  using BackwardFn = std::function<void(Graph&, const Tensor& out, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Leaf that views caller-owned storage; `value` must outlive the graph.
  Var reference(const Tensor& value, bool requires_grad);

  // Records an op node. It requires a gradient iff some input does; `fn` is
  // dropped otherwise.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(fn));
  }

  const Tensor& value(Var v) const { return node(v).external ? *node(v).external : node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  bool has_grad(Var v) const { return !node(v).grad.empty(); }
  // Gradient after backward(); an all-zero tensor if nothing reached the node.
  Tensor grad(Var v) const;
  // Mutable accumulator, zero-initialized on first access.
  Tensor& grad_buffer(Var v);

  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  void backward(Var loss);
  void zero_grad();

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push(Node n);

  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }
inline bool Var::requires_grad() const { return graph_->requires_grad(*this); }

}  // namespace mgvae::ad
