// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace brainformer::numerics {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Graph recording is on by default. While a guard is alive on the current
/// thread, ops produce untracked results.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something flows into this node
  bool requires_grad = false;
  std::uint64_t id = 0;  // creation order; a node's inputs always have smaller ids
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Propagates this node's grad into its inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

std::uint64_t next_node_id();

}  // namespace detail

/// Dense row-major array with optional reverse-mode gradient tracking.
///
/// A Tensor is a cheap shared handle. Values are fixed once an op has
/// produced them; only leaves (parameters) may be mutated in place, and only
/// between graph constructions.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  /// Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<T> values);
  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  /// In-place access for leaves (optimizer updates, data loading).
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  /// Allocates (or clears) the gradient buffer to zeros.
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  /// Same values, no history.
  Tensor detach() const;
  const char* op_name() const { return node_->op; }

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  /// calls; gradients of intermediate nodes are reset at the start of each
  /// sweep and stay readable afterwards.
  void backward() const;

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

namespace detail {

/// Builds an op result. The output is tracked when grad mode is on and any
/// input requires grad; `backward` is dropped otherwise. Throws
/// NonFiniteError if `values` contains NaN or Inf.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::vector<Tensor<T>> inputs, std::function<void(Node<T>&)> backward);

void throw_non_finite(const char* op, const char* what);

template <typename T>
void check_finite(const char* op, std::span<const T> values, const char* what) {
  for (const T v : values) {
    // v - v is NaN for both NaN and Inf.
    if (!(v - v == T(0))) throw_non_finite(op, what);
  }
}

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace brainformer::numerics
