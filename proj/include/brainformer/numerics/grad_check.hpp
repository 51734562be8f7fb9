// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "brainformer/numerics/tensor.hpp"

namespace brainformer::numerics {

/// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  // Location of the worst entry.
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares backward() gradients of a scalar function against central
/// differences (f(x + eps) - f(x - eps)) / (2 eps) for every entry of every
/// tensor in `inputs`. The function must rebuild its graph on every call.
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss, std::span<Tensor<double>> inputs,
                           double eps = 1e-4, std::span<const std::string> names = {});

}  // namespace brainformer::numerics
