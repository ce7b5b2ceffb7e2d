#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "toder/models/tensor.hpp"

namespace toder::nn {

struct Node;
using Var = std::shared_ptr<Node>;

/// One value in the computation graph. Non-leaf nodes keep their parents alive and know
/// how to push their gradient back to them.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward;

  [[nodiscard]] const Shape& shape() const { return value.shape; }

  /// Gradient buffer, allocated on first use.
  Tensor& grad_buffer() {
    if (grad.shape.size() != value.shape.size() || grad.empty()) grad = Tensor(value.shape);
    return grad;
  }
};

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/// Disables graph recording in its scope (inference, frozen networks).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline Var constant(Tensor t) {
  auto node = std::make_shared<Node>();
  node->value = std::move(t);
  return node;
}

inline Var parameter(Tensor t) {
  auto node = std::make_shared<Node>();
  node->value = std::move(t);
  node->requires_grad = true;
  return node;
}

/// Creates the output node of an op. The backward closure is only kept when a parent
/// needs gradients and recording is enabled.
inline Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (grad_enabled()) {
    for (const auto& p : parents) node->requires_grad = node->requires_grad || p->requires_grad;
  }
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return node;
}

/// Reverse-mode sweep from a scalar. Parameter gradients accumulate across calls.
inline void backward(const Var& root, float seed = 1.0f) {
  require(root->value.size() == 1, "backward: root must be a scalar");
  if (!root->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad_buffer().data[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
    // Intermediate gradients are not needed once pushed to the parents.
    if (n->backward) n->grad = Tensor();
  }
}

}  // namespace toder::nn
