// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "brainformer/numerics/tensor.hpp"
#include "brainformer/rng.hpp"

namespace brainformer::model {

using numerics::Shape;
using numerics::Tensor;

/// Learnable parameter with a stable, checkpointable name.
template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
  /// Excluded from weight decay (biases, norm gains, temperature).
  bool no_decay = false;
};

/// Ordered registry of every parameter of a model. Registration order is the
/// order of initialization, of optimizer updates and of checkpoint records.
template <typename T>
class ParameterSet {
 public:
  Tensor<T> add(std::string name, Shape shape, const std::vector<double>& values, bool no_decay = false);

  std::vector<NamedParameter<T>>& entries() { return entries_; }
  const std::vector<NamedParameter<T>>& entries() const { return entries_; }
  const NamedParameter<T>* find(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<NamedParameter<T>> entries_;
};

// Initializers, drawn in double precision so float and double models built
// from the same seed hold the same values up to rounding.
std::vector<double> uniform_values(Rng& rng, std::size_t n, double bound);
/// U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
std::vector<double> kaiming_uniform(Rng& rng, std::size_t n, std::size_t fan_in);
/// U(-sqrt(6 / (fan_in + fan_out)), ...).
std::vector<double> xavier_uniform(Rng& rng, std::size_t n, std::size_t fan_in, std::size_t fan_out);
inline std::vector<double> constant_values(std::size_t n, double v) { return std::vector<double>(n, v); }

}  // namespace brainformer::model
