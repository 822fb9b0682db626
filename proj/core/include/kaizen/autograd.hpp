// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over Tensor values.
//
// A Var is a handle to a graph node. Leaves created with Var::parameter()
// accumulate gradients across backward() calls until zero_grad(). Interior
// nodes keep their inputs alive, so dropping the root of a loss frees the
// whole graph. Nodes whose inputs do not require gradients are created as
// constants and record nothing.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "kaizen/tensor.hpp"

namespace kaizen {

struct Node;

// Receives the gradient flowing into the node's output and adds the
// corresponding contribution into each input gradient. Entries of
// `input_grads` are null for inputs that do not require gradients.
using BackwardFn = std::function<void(const Tensor& output_grad, std::vector<Tensor*>& input_grads)>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var constant(Tensor value) { return Var(std::move(value), false); }
  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  // Direct write access for optimizers and in-place parameter updates.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  // Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }
  // Fresh leaf with a copy of the value and the same requires_grad flag.
  Var deep_copy() const { return Var(node_->value, node_->requires_grad); }

  const std::shared_ptr<Node>& node() const { return node_; }
  bool same_node(const Var& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds an interior node. `fn` is dropped when no input requires a gradient.
Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn fn);

// Back-propagates from a scalar root (seed gradient 1).
void backward(const Var& root);
// Back-propagates an explicit seed gradient with the root's shape.
void backward(const Var& root, const Tensor& seed);

}  // namespace kaizen
