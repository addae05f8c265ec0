#include "fmrlrec/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "fmrlrec/error.hpp"

namespace fmrlrec {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool on) { grad_mode_enabled = on; }

NoGradGuard::NoGradGuard() : previous_(grad_mode_enabled) { grad_mode_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_mode_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from_vector(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_vector({}, {value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::extent(std::ptrdiff_t axis) const {
  const auto r = static_cast<std::ptrdiff_t>(rank());
  const auto a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(shape()));
  }
  return node_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return node_->data[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T{0});
}

template <typename T>
Tensor<T> Tensor<T>::detach(bool requires_grad) const {
  return from_vector(shape(), node_->data, requires_grad);
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
  }
  using Node = TensorNode<T>;
  Node* root = loss.node().get();
  if (!root->requires_grad) {
    throw ContractError("backward() on a loss that does not require grad");
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), T{0});
  }
  root->grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
}

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(TensorNode<T>&)> backward_fn, const char* op) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  if (GradMode::enabled()) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor<T>& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& t : inputs) node->parents.push_back(t.node());
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor<T>(std::move(node));
}

template Tensor<float> make_result(Shape, std::vector<float>, std::vector<Tensor<float>>,
                                   std::function<void(TensorNode<float>&)>, const char*);
template Tensor<double> make_result(Shape, std::vector<double>, std::vector<Tensor<double>>,
                                    std::function<void(TensorNode<double>&)>, const char*);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace fmrlrec
