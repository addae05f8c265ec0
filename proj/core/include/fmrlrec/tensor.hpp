#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fmrlrec {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// One recorded value in the autodiff graph. Parents are owned by the child,
/// so a graph lives exactly as long as the tensors that reach into it.
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  /// Propagates this node's grad into its parents' grad buffers.
  std::function<void(TensorNode&)> backward;
  const char* op = "leaf";

  bool is_leaf() const { return !backward; }

  /// Zero-initialised grad buffer, allocated on first use.
  std::span<T> grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T{0});
    return grad;
  }
};

/// Thread-local switch that disables graph recording (evaluation, inference).
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor with a handle into the autodiff graph.
///
/// Copies are shallow: two Tensor values may share one node. Data is treated as
/// immutable once the tensor participates in a graph; `mutable_data` exists for
/// leaf parameters (initialisation and optimizer updates).
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  /// Extent along `axis`; negative axes count from the end.
  std::size_t extent(std::ptrdiff_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return node_->is_leaf(); }
  bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  /// Fresh leaf holding a copy of the data and no graph history.
  Tensor detach(bool requires_grad = false) const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode sweep from a scalar. Leaf grads accumulate across calls;
/// interior grads are recomputed from scratch each call.
template <typename T>
void backward(const Tensor<T>& loss);

namespace detail {

/// Creates an op result. The backward closure is kept only when grad mode is on
/// and at least one input requires grad.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(TensorNode<T>&)> backward, const char* op);

/// Parent grad buffer, or an empty span when that parent does not need one.
template <typename T>
std::span<T> parent_grad(TensorNode<T>& self, std::size_t i) {
  auto& parent = *self.parents[i];
  if (!parent.requires_grad) return {};
  return parent.grad_buffer();
}

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace fmrlrec
