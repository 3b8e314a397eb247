#pragma once

#include <functional>
#include <memory>
#include <unordered_set>

#include "l2s/common.hpp"

namespace l2s::nn {

// Node in a dynamically built computation graph. Ops run eagerly and record
// a backward closure; backward() replays them in reverse topological order.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Tensor>> parents;
  std::function<void()> backward_fn;

  size_t numel() const {
    size_t n = 1;
    for (int d : shape) n *= size_t(d);
    return n;
  }
  int dim(int i) const { return shape[size_t(i) < shape.size() ? i : shape.size() + i]; }
  int ndim() const { return int(shape.size()); }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    require(d >= 0, "negative dimension in shape");
    n *= size_t(d);
  }
  return n;
}

// Leaf tensor (parameter or input).
inline TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->value.assign(shape_numel(t->shape), 0.0);
  t->requires_grad = requires_grad;
  if (requires_grad) t->grad.assign(t->value.size(), 0.0);
  return t;
}

inline TensorPtr make_tensor(std::vector<int> shape, std::vector<double> value,
                             bool requires_grad = false) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  require(value.size() == shape_numel(t->shape), "value size does not match shape");
  t->value = std::move(value);
  t->requires_grad = requires_grad;
  if (requires_grad) t->grad.assign(t->value.size(), 0.0);
  return t;
}

// Result node for an op. Grad buffers and the parent list are only kept when
// some parent participates in differentiation.
inline TensorPtr op_result(std::vector<int> shape, std::vector<TensorPtr> parents) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->value.assign(shape_numel(t->shape), 0.0);
  for (const auto& p : parents)
    if (p && p->requires_grad) t->requires_grad = true;
  if (t->requires_grad) {
    t->grad.assign(t->value.size(), 0.0);
    t->parents = std::move(parents);
  }
  return t;
}

inline void backward(const TensorPtr& root) {
  require(root->numel() == 1, "backward() expects a scalar root");
  require(root->requires_grad, "root does not require grad");

  // iterative post-order DFS
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> visited;
  std::vector<std::pair<Tensor*, size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Tensor* p = node->parents[idx].get();
      ++idx;
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}

}  // namespace l2s::nn
