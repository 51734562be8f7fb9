// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/numerics/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "brainformer/error.hpp"

namespace brainformer::numerics {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

namespace detail {

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

void throw_non_finite(const char* op, const char* what) {
  throw NonFiniteError(op, std::string("non-finite ") + what + " produced by op '" + op + "'");
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::vector<Tensor<T>> inputs, std::function<void(Node<T>&)> backward) {
  check_finite<T>(op, values, "value");
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->id = next_node_id();
  node->op = op;
  bool tracked = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) tracked = tracked || in.requires_grad();
  }
  if (tracked) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template Tensor<float> make_result(const char*, Shape, std::vector<float>, std::vector<Tensor<float>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(const char*, Shape, std::vector<double>, std::vector<Tensor<double>>,
                                    std::function<void(Node<double>&)>);

}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) {
  node_ = std::make_shared<detail::Node<T>>();
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
  node_->id = detail::next_node_id();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("Tensor: shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->id = detail::next_node_id();
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> values) {
  Tensor t(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (node_->backward) throw UsageError("Tensor::mutable_data: only leaves may be modified in place");
  return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (node_->data.size() != 1) {
    throw UsageError("Tensor::item: tensor of shape " + shape_string(node_->shape) + " is not a scalar");
  }
  return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  if (node_->backward) throw UsageError("Tensor::set_requires_grad: not a leaf");
  node_->requires_grad = flag;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  node_->grad.assign(node_->data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data);
}

template <typename T>
void Tensor<T>::backward() const {
  if (node_->data.size() != 1) {
    throw UsageError("backward: loss must be a scalar, got shape " + shape_string(node_->shape));
  }
  if (!node_->requires_grad) throw UsageError("backward: loss is not tracked");

  // Collect every node reachable from the loss. Node ids give a total order
  // consistent with the graph, so descending id is a reverse topological order.
  std::vector<detail::Node<T>*> order;
  {
    std::vector<detail::Node<T>*> stack{node_.get()};
    std::unordered_set<const detail::Node<T>*> seen;
    while (!stack.empty()) {
      auto* n = stack.back();
      stack.pop_back();
      if (!seen.insert(n).second) continue;
      order.push_back(n);
      for (auto& in : n->inputs) {
        if (in->requires_grad && !seen.contains(in.get())) stack.push_back(in.get());
      }
    }
    std::sort(order.begin(), order.end(),
              [](const detail::Node<T>* a, const detail::Node<T>* b) { return a->id > b->id; });
  }

  for (auto* n : order) {
    if (n->backward) n->grad.clear();
  }
  node_->ensure_grad()[0] += T(1);

  for (auto* n : order) {
    if (!n->backward || n->grad.empty()) continue;
    detail::check_finite<T>(n->op, n->grad, "gradient");
    n->backward(*n);
  }
  for (auto* n : order) {
    if (!n->backward && !n->grad.empty()) detail::check_finite<T>("leaf", n->grad, "gradient");
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace brainformer::numerics
