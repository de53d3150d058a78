#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "diffcore/array.hpp"

namespace anchorforge::diff {

template <typename T>
struct Node {
  Array<T> value;
  Buffer<T> grad;  // empty until a backward pass reaches the node
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents that require it.
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";
  bool requires_grad = false;
};

/// Handle to a graph node. Copies share the node.
template <typename T>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor constant(Array<T> value);
  static Tensor variable(Array<T> value);

  bool defined() const { return static_cast<bool>(node_); }
  const Array<T>& value() const { return node_->value; }
  Array<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::int64_t size() const { return node_->value.size(); }
  const Buffer<T>& grad() const { return node_->grad; }
  Buffer<T>& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Reverse-mode sweep from a scalar loss. Gradients of every reachable node
/// are zeroed first, then accumulated in reverse topological order.
template <typename T>
void backward(const Tensor<T>& loss);

namespace detail {
template <typename T>
Tensor<T> make_result(const char* op, Array<T> value, std::vector<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward_fn);
}  // namespace detail

}  // namespace anchorforge::diff
