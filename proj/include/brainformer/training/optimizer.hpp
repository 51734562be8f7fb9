// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "brainformer/model/parameters.hpp"

namespace brainformer::training {

/// 0.5 * lr0 * (1 + cos(pi * step / total_steps)).
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay. Parameters flagged no_decay skip the
/// decay term. Moments are kept per parameter in registration order.
template <typename T>
class AdamW {
 public:
  explicit AdamW(const model::ParameterSet<T>& params, AdamWOptions options = {});

  /// One update at learning rate `lr`. Throws UsageError if a parameter has
  /// no gradient buffer.
  void step(model::ParameterSet<T>& params, double lr);

  std::uint64_t steps_taken() const { return t_; }
  const AdamWOptions& options() const { return options_; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_steps_taken(std::uint64_t t) { t_ = t; }

 private:
  AdamWOptions options_;
  std::vector<std::vector<T>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace brainformer::training
