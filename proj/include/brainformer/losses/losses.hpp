// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "brainformer/model/parameters.hpp"
#include "brainformer/numerics/tensor.hpp"

namespace brainformer::losses {

using numerics::Tensor;

inline constexpr double kInitialSigma = 0.07;
inline constexpr double kMinSigma = 0.01;
inline constexpr double kMaxSigma = 100.0;

/// Learnable contrastive temperature stored as log sigma.
template <typename T>
class Temperature {
 public:
  Temperature(model::ParameterSet<T>& params, const std::string& name, double sigma = kInitialSigma);

  const Tensor<T>& log_sigma() const { return log_sigma_; }
  double sigma() const;
  /// Pulls sigma back into [kMinSigma, kMaxSigma].
  void clamp();

 private:
  Tensor<T> log_sigma_;  // [1]
};

/// Symmetric InfoNCE over N pairs: CE(P Q^T / sigma, diag) + CE(Q P^T / sigma, diag),
/// each a mean over rows. P, Q: [N, d]; log_sigma: [1].
template <typename T>
Tensor<T> contrastive_loss(const Tensor<T>& p, const Tensor<T>& q, const Tensor<T>& log_sigma, bool normalize = true);

/// -(1/N) sum_i sum_k log softmax_g(pbar_i^k . qbar_i^g)[g = k].
/// pbar, qbar: [N, 6, d].
template <typename T>
Tensor<T> guidance_loss(const Tensor<T>& pbar, const Tensor<T>& qbar, bool normalize = true);

template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_con, const Tensor<T>& l_bfg, double lambda_con = 0.5,
                     double lambda_bfg = 0.5);

}  // namespace brainformer::losses
