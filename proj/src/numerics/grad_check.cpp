// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "brainformer/error.hpp"

namespace brainformer::numerics {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss, std::span<Tensor<double>> inputs,
                           double eps, std::span<const std::string> names) {
  if (!(eps > 0.0)) throw UsageError("grad_check: eps must be positive");
  std::vector<bool> restore_flag;
  for (auto& t : inputs) {
    restore_flag.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto values = inputs[ti].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = loss().item();
      values[i] = saved - eps;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(analytic[ti][i], numeric);
      ++report.entries;
      if (err > report.max_rel_error || report.entries == 1) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        report.worst_tensor = ti < names.size() ? names[ti] : "input " + std::to_string(ti);
        report.worst_index = i;
        report.worst_analytic = analytic[ti][i];
        report.worst_numeric = numeric;
      }
    }
  }
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    inputs[ti].clear_grad();
    inputs[ti].set_requires_grad(restore_flag[ti]);
  }
  return report;
}

}  // namespace brainformer::numerics
