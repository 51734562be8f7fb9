// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

// Shared helpers for the unit tests.

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "brainformer/numerics/tensor.hpp"
#include "brainformer/rng.hpp"

namespace bf_test {

using brainformer::Rng;
using brainformer::numerics::Shape;
using brainformer::numerics::Tensor;

template <typename T = double>
Tensor<T> random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<T> v(brainformer::numerics::shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(scale * rng.normal());
  return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
std::vector<double> values(const Tensor<T>& t) {
  return std::vector<double>(t.data().begin(), t.data().end());
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (a.data()[i] != b.data()[i]) return false;
  }
  return true;
}

}  // namespace bf_test
