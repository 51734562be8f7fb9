// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "brainformer/numerics/grad_check.hpp"

namespace brainformer::training {

struct GradCheckCase {
  std::string name;
  numerics::GradCheckReport report;
};

/// Finite-difference checks of every differentiable op and model component
/// on small random 64-bit inputs.
std::vector<GradCheckCase> check_ops(std::uint64_t seed, double eps = 1e-4);

/// Finite-difference check of the total loss of a tiny Brainformer on a
/// 2-sample synthetic batch, over every parameter.
numerics::GradCheckReport check_model(std::uint64_t seed, double eps = 1e-4);

}  // namespace brainformer::training
