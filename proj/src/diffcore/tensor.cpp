#include "diffcore/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace anchorforge::diff {

template <typename T>
Tensor<T> Tensor<T>::constant(Array<T> value) {
  check_finite(value, "constant");
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = "constant";
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::variable(Array<T> value) {
  check_finite(value, "variable");
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = "variable";
  node->requires_grad = true;
  return Tensor(std::move(node));
}

namespace detail {

template <typename T>
Tensor<T> make_result(const char* op, Array<T> value, std::vector<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward_fn) {
  check_finite(value, op);
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  for (const auto& p : parents) {
    if (p.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

template Tensor<float> make_result(const char*, Array<float>, std::vector<Tensor<float>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(const char*, Array<double>, std::vector<Tensor<double>>,
                                    std::function<void(Node<double>&)>);

}  // namespace detail

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw DiffError("backward", "loss must be a scalar, got shape " +
                                    (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) throw DiffError("backward", "loss does not depend on any variable");

  // Iterative post-order DFS; each node is visited once.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) n->grad.assign(n->value.data.size(), T{0});
  loss.node()->grad[0] = T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace anchorforge::diff
