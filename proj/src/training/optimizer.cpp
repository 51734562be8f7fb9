// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/training/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "brainformer/error.hpp"

namespace brainformer::training {

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps == 0 || step > total_steps) throw UsageError("cosine_lr: need 0 <= step <= total_steps");
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

template <typename T>
AdamW<T>::AdamW(const model::ParameterSet<T>& params, AdamWOptions options) : options_(options) {
  for (const auto& p : params.entries()) {
    m_.emplace_back(p.tensor.numel(), T(0));
    v_.emplace_back(p.tensor.numel(), T(0));
  }
}

template <typename T>
void AdamW<T>::step(model::ParameterSet<T>& params, double lr) {
  auto& entries = params.entries();
  if (entries.size() != m_.size()) throw UsageError("AdamW: parameter set changed since construction");
  for (const auto& p : entries) {
    if (!p.tensor.has_grad()) throw UsageError("AdamW: parameter '" + p.name + "' has no gradient");
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& tensor = entries[i].tensor;
    const auto grad = tensor.grad();
    auto value = tensor.mutable_data();
    const double decay = entries[i].no_decay ? 0.0 : lr * options_.weight_decay;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      const double mj = b1 * m[j] + (1.0 - b1) * g;
      const double vj = b2 * v[j] + (1.0 - b2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      double theta = value[j];
      theta -= decay * theta;
      theta -= lr * (mj / c1) / (std::sqrt(vj / c2) + options_.eps);
      value[j] = static_cast<T>(theta);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace brainformer::training
