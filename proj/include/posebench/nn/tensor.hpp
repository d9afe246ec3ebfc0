#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "posebench/errors.hpp"

namespace posebench::nn {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ShapeMismatch("shape: dimensions must be positive");
    n *= d;
  }
  return n;
}

// Reverse-mode tape over densely stored arrays. A Tensor is a shared handle
// to a Node; ops build new nodes whose `pull` closure scatters the node's
// gradient into its parents. The graph is a DAG (children reference parents
// only), so shared_ptr ownership cannot cycle.
//
// Instantiated with T = float for training and T = double for the finite
// difference gradient checks.
template <typename T>
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until a backward pass reaches this node
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void(Node&)> pull;

    void ensure_grad() {
      if (grad.empty()) grad.assign(value.size(), T(0));
    }
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value.assign(static_cast<std::size_t>(shape_numel(t.node_->shape)), T(0));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
      throw ShapeMismatch("from_data: element count does not match shape");
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  // Result node for an op: requires grad iff any parent does.
  static Tensor result(Shape shape, std::vector<Tensor> parents) {
    Tensor t = zeros(std::move(shape));
    for (const Tensor& p : parents)
      if (p.requires_grad()) t.node_->requires_grad = true;
    t.node_->parents = std::move(parents);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

  T* data() { return node_->value.data(); }
  const T* data() const { return node_->value.data(); }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  T* grad() {
    node_->ensure_grad();
    return node_->grad.data();
  }
  const std::vector<T>& grad_values() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->value.size(), T(0));
  }

  void set_pull(std::function<void(Node&)> fn) { node_->pull = std::move(fn); }
  Node* node() const { return node_.get(); }

  // Backward from a scalar: seeds d(self)/d(self) = 1.
  void backward() {
    if (numel() != 1) throw ShapeMismatch("backward: root must be a scalar");
    backward_multi({{*this, {T(1)}}});
  }

  // Backward from several roots at once with externally supplied cotangents.
  // Used when the loss head gradients are computed outside the tape.
  static void backward_multi(const std::vector<std::pair<Tensor, std::vector<T>>>& seeds) {
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    for (const auto& [root, cotangent] : seeds) {
      if (!root.defined()) throw ShapeMismatch("backward: undefined root");
      if (static_cast<std::int64_t>(cotangent.size()) != root.numel())
        throw ShapeMismatch("backward: cotangent size does not match root");
      topo_visit(root.node(), visited, order);
    }
    for (const auto& [root, cotangent] : seeds) {
      root.node()->ensure_grad();
      for (std::size_t i = 0; i < cotangent.size(); ++i) root.node()->grad[i] += cotangent[i];
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->pull && n->requires_grad && !n->grad.empty()) n->pull(*n);
    }
  }

 private:
  static void topo_visit(Node* root, std::unordered_set<Node*>& visited,
                         std::vector<Node*>& order) {
    // Iterative post-order so deep graphs cannot overflow the stack.
    struct Frame {
      Node* node;
      std::size_t next_parent;
    };
    if (visited.count(root)) return;
    std::vector<Frame> stack{{root, 0}};
    visited.insert(root);
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        Node* p = f.node->parents[f.next_parent++].node();
        if (!visited.count(p)) {
          visited.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> node_;
};

}  // namespace posebench::nn
