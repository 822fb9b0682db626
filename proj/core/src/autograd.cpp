// SPDX-License-Identifier: Apache-2.0

#include "kaizen/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace kaizen {

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  bool any = false;
  for (const auto& in : inputs) {
    if (!in.defined()) throw std::invalid_argument("make_op: undefined input");
    any = any || in.requires_grad();
  }
  Var out(std::move(value), any);
  if (any) {
    auto& node = *out.node();
    node.inputs.reserve(inputs.size());
    for (auto& in : inputs) node.inputs.push_back(in.node());
    node.backward = std::move(fn);
  }
  return out;
}

namespace {

void topo_order(const std::shared_ptr<Node>& root, std::vector<Node*>& order) {
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS; explicit stack keeps deep ResNet graphs off the
  // call stack.
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace

void backward(const Var& root, const Tensor& seed) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined root");
  if (!root.requires_grad()) return;
  if (!seed.same_shape(root.value())) {
    throw std::invalid_argument("backward: seed shape " + shape_string(seed.shape()) + " does not match root " +
                                shape_string(root.shape()));
  }
  std::vector<Node*> order;
  topo_order(root.node(), order);

  // Interior gradients are scratch; leaves keep accumulating.
  for (Node* n : order) {
    if (n->backward) n->grad = Tensor();
  }
  Node& r = *root.node();
  if (r.grad.empty()) r.grad = Tensor(r.value.shape());
  r.grad.add_(seed);

  std::vector<Tensor*> input_grads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward || n->grad.empty()) continue;
    input_grads.assign(n->inputs.size(), nullptr);
    for (size_t i = 0; i < n->inputs.size(); ++i) {
      Node* in = n->inputs[i].get();
      if (!in->requires_grad) continue;
      if (in->grad.empty()) in->grad = Tensor(in->value.shape());
      input_grads[i] = &in->grad;
    }
    n->backward(n->grad, input_grads);
    // Release interior scratch once consumed.
    n->grad = Tensor();
  }
}

void backward(const Var& root) {
  if (root.defined() && root.value().numel() != 1) {
    throw std::invalid_argument("backward: root must be a scalar, got " + shape_string(root.shape()));
  }
  backward(root, Tensor(root.shape(), 1.0));
}

}  // namespace kaizen
