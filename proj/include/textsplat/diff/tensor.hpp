#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace textsplat::diff {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Thread-local switch that suppresses graph recording (inference paths).
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct TensorImpl;

template <typename T>
struct Node {
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  // Reads the owning tensor's grad and accumulates into the inputs' grads.
  std::function<void(const TensorImpl<T>& out)> backward;
  bool consumed = false;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  bool retain_grad = false;
  std::shared_ptr<Node<T>> node;  // null for leaves

  bool is_leaf() const { return node == nullptr; }

  // Returns the grad buffer, allocating zeros on first use.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(values.size(), T(0));
    return grad;
  }
};

// Reference-counted handle to a dense row-major array. Copies share storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
  static Tensor full(Shape shape, T value) {
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->values.assign(numel(shape), value);
    impl->shape = std::move(shape);
    return Tensor(std::move(impl));
  }
  static Tensor from(Shape shape, std::vector<T> values) {
    if (numel(shape) != values.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    }
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    return Tensor(std::move(impl));
  }
  static Tensor scalar(T value) { return from({}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t size() const { return impl_->values.size(); }

  std::span<const T> values() const { return impl_->values; }
  // Direct mutation is only legal on leaves (parameters, inputs).
  std::span<T> mutable_values() {
    if (!impl_->is_leaf()) throw GraphError("mutable_values on a non-leaf tensor");
    return impl_->values;
  }
  T item() const {
    if (impl_->values.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->values[0];
  }
  T operator[](std::size_t i) const { return impl_->values[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    if (!impl_->is_leaf()) throw GraphError("requires_grad can only be set on leaves");
    impl_->requires_grad = on;
    if (!on) impl_->grad.clear();
    return *this;
  }
  Tensor& retain_grad() {
    impl_->retain_grad = true;
    return *this;
  }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  // Fresh leaf holding a copy of the values, detached from any graph.
  Tensor detach() const { return from(shape(), impl_->values); }

  // Reverse-mode sweep from this scalar. Consumes the recorded graph.
  void backward() const;

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

// Creates the result tensor of an op, attaching a graph node when any input
// requires grad and recording is enabled.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
                      std::function<void(const TensorImpl<T>&)> backward) {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) needs = needs || (in && in->requires_grad);
  }
  if (needs) {
    impl->requires_grad = true;
    auto node = std::make_shared<Node<T>>();
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    impl->node = std::move(node);
  }
  return Tensor<T>(std::move(impl));
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace textsplat::diff
