// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "brainformer/data/fmri.hpp"
#include "brainformer/error.hpp"
#include "brainformer/numerics/ops.hpp"

namespace brainformer::losses {

namespace ops = numerics;

template <typename T>
Temperature<T>::Temperature(model::ParameterSet<T>& params, const std::string& name, double sigma) {
  if (!(sigma > 0)) throw UsageError("Temperature: sigma must be positive");
  log_sigma_ = params.add(name, {1}, {std::log(sigma)}, true);
}

template <typename T>
double Temperature<T>::sigma() const {
  return std::exp(static_cast<double>(log_sigma_.data()[0]));
}

template <typename T>
void Temperature<T>::clamp() {
  T& v = log_sigma_.mutable_data()[0];
  v = std::clamp(v, static_cast<T>(std::log(kMinSigma)), static_cast<T>(std::log(kMaxSigma)));
}

template <typename T>
Tensor<T> contrastive_loss(const Tensor<T>& p, const Tensor<T>& q, const Tensor<T>& log_sigma, bool normalize) {
  if (p.rank() != 2 || p.shape() != q.shape() || p.dim(0) == 0) {
    throw DimensionError("contrastive_loss: P and Q must both be [N, d], got " + numerics::shape_string(p.shape()) +
                         " and " + numerics::shape_string(q.shape()));
  }
  if (log_sigma.numel() != 1) throw DimensionError("contrastive_loss: log_sigma must hold one value");
  const auto pn = normalize ? ops::l2_normalize_rows(p) : p;
  const auto qn = normalize ? ops::l2_normalize_rows(q) : q;
  auto logits = ops::div_scalar(ops::matmul(pn, ops::transpose(qn)), ops::exp(log_sigma));
  std::vector<std::size_t> diag(p.dim(0));
  std::iota(diag.begin(), diag.end(), std::size_t{0});
  return ops::add(ops::cross_entropy(logits, diag), ops::cross_entropy(ops::transpose(logits), diag));
}

template <typename T>
Tensor<T> guidance_loss(const Tensor<T>& pbar, const Tensor<T>& qbar, bool normalize) {
  if (pbar.rank() != 3 || pbar.shape() != qbar.shape()) {
    throw DimensionError("guidance_loss: inputs must both be [N, 6, d], got " + numerics::shape_string(pbar.shape()) +
                         " and " + numerics::shape_string(qbar.shape()));
  }
  const std::size_t n = pbar.dim(0), r = pbar.dim(1), d = pbar.dim(2);
  if (r != data::kRoiCount) throw UsageError("guidance_loss: ROI dimension must be 6, got " + std::to_string(r));
  auto pf = ops::reshape(pbar, {n * r, d});
  auto qf = ops::reshape(qbar, {n * r, d});
  if (normalize) {
    pf = ops::l2_normalize_rows(pf);
    qf = ops::l2_normalize_rows(qf);
  }
  auto logits = ops::batched_matmul_nt(pf, qf, n);  // row i*6+k holds pbar_i^k . qbar_i^g
  std::vector<std::size_t> targets(n * r);
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = i % r;
  // cross_entropy averages over N*6 rows; the loss sums over k.
  return ops::scale(ops::cross_entropy(logits, targets), static_cast<T>(r));
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_con, const Tensor<T>& l_bfg, double lambda_con, double lambda_bfg) {
  if (lambda_con < 0 || lambda_bfg < 0) throw UsageError("total_loss: weights must be non-negative");
  return ops::add(ops::scale(l_con, static_cast<T>(lambda_con)), ops::scale(l_bfg, static_cast<T>(lambda_bfg)));
}

#define BRAINFORMER_INSTANTIATE_LOSSES(T)                                                     \
  template class Temperature<T>;                                                               \
  template Tensor<T> contrastive_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool); \
  template Tensor<T> guidance_loss(const Tensor<T>&, const Tensor<T>&, bool);                  \
  template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, double, double);

BRAINFORMER_INSTANTIATE_LOSSES(float)
BRAINFORMER_INSTANTIATE_LOSSES(double)

}  // namespace brainformer::losses
