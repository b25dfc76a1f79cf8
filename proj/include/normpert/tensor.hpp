#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace normpert {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One recorded value in the autodiff graph. Leaves have no backward_fn.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

// Gradient buffer of the i-th parent, or nullptr when it takes no gradient.
template <typename T>
T* parent_grad(Node<T>& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? p.grad_buffer().data() : nullptr;
}

}  // namespace detail

/// Dense row-major tensor with optional reverse-mode gradient tracking.
///
/// Tensors are handles: copies share storage and graph position, like the
/// tensor types of most autograd engines. Use clone() or detach() for an
/// independent copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const { return data().size(); }

  std::span<const T> data() const;
  // Mutating data of a tensor that is part of a live graph invalidates it;
  // only parameter updates and test fixtures should do this.
  std::span<T> mutable_data();
  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const T> grad() const;
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node<T>> node);

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

/// While alive, ops on this thread record no graph (evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Builds the output tensor of a differentiable op. backward_fn is recorded
/// only when at least one input requires a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(detail::Node<T>&)> backward_fn);

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate
/// additively; interior nodes are released after their adjoint runs.
template <typename T>
void backward(const Tensor<T>& loss);

/// Throws std::runtime_error naming `where` if any value is NaN or Inf.
template <typename T>
void check_finite(std::span<const T> values, const std::string& where);

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x) {
  std::vector<To> out(x.data().begin(), x.data().end());
  return Tensor<To>(x.shape(), std::move(out));
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace normpert
