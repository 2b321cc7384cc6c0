#pragma once

#include "diffgan/tensor.hpp"

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace diffgan {

/// Raised when backward() is asked for something the tape cannot provide.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <class S>
class Graph;

/// Handle to a value recorded on a Graph.
template <class S>
struct Var {
  Graph<S>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<S>& value() const { return graph->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape.
///
/// Nodes are appended in evaluation order, so reverse creation order is a valid
/// topological order for backward(). A node only keeps its backward closure when
/// at least one parent needs a gradient; graphs built purely from constants are
/// plain forward evaluation.
template <class S>
class Graph {
 public:
  /// Called with the node's value and its accumulated gradient.
  using Backward = std::function<void(Graph&, const Tensor<S>& value, const Tensor<S>& grad)>;

  Var<S> leaf(Tensor<S> value, bool requires_grad = false) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, false, {}});
    return Var<S>{this, nodes_.size() - 1};
  }

  Var<S> constant(Tensor<S> value) { return leaf(std::move(value), false); }

  Var<S> record(Tensor<S> value, std::initializer_list<Var<S>> parents, Backward fn) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || requires_grad(p);
    nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(fn) : Backward{}});
    return Var<S>{this, nodes_.size() - 1};
  }

  Var<S> record(Tensor<S> value, const std::vector<Var<S>>& parents, Backward fn) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || requires_grad(p);
    nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(fn) : Backward{}});
    return Var<S>{this, nodes_.size() - 1};
  }

  const Tensor<S>& value(Var<S> v) const { return node(v).value; }
  bool requires_grad(Var<S> v) const { return node(v).requires_grad; }

  /// Gradient of the last backward() target with respect to v (zeros if none flowed).
  Tensor<S> grad(Var<S> v) const {
    const Node& n = node(v);
    return n.has_grad ? n.grad : Tensor<S>::zeros(n.value.shape());
  }

  /// Mutable gradient storage for accumulation inside backward closures.
  VectorX<S>& grad_data(Var<S> v) {
    Node& n = node(v);
    if (!n.has_grad) {
      n.grad = Tensor<S>::zeros(n.value.shape());
      n.has_grad = true;
    }
    return n.grad.data();
  }

  typename Tensor<S>::Map grad_matrix(Var<S> v) {
    grad_data(v);
    return node(v).grad.matrix();
  }

  void backward(Var<S> loss) {
    if (loss.graph != this) throw ContractError("backward: variable belongs to another graph");
    if (value(loss).size() != 1) {
      throw ContractError("backward: loss must be a scalar, got shape " + to_string(value(loss).shape()));
    }
    for (auto& n : nodes_) {
      n.has_grad = false;
      n.grad = Tensor<S>();
    }
    grad_data(loss).setOnes();
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, n.value, n.grad);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  Node& node(Var<S> v) {
    if (v.graph != this || v.id >= nodes_.size()) throw ContractError("graph: foreign or dangling variable");
    return nodes_[v.id];
  }
  const Node& node(Var<S> v) const {
    if (v.graph != this || v.id >= nodes_.size()) throw ContractError("graph: foreign or dangling variable");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
};

}  // namespace diffgan
