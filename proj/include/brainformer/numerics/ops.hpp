// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "brainformer/numerics/tensor.hpp"

namespace brainformer::numerics {

// Elementwise, identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> exp(const Tensor<T>& a);

/// Exact-erf GELU: 0.5 x (1 + erf(x / sqrt 2)).
template <typename T> Tensor<T> gelu(const Tensor<T>& x);

/// x / s where s holds a single value.
template <typename T> Tensor<T> div_scalar(const Tensor<T>& x, const Tensor<T>& s);

/// x[..., n] + bias[n], broadcast over leading dims.
template <typename T> Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);

/// a[m,k] x b[k,n] -> [m,n].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Per-group a_g * b_g^T with a: [G*m, k], b: [G*n, k] -> [G*m, n].
template <typename T>
Tensor<T> batched_matmul_nt(const Tensor<T>& a, const Tensor<T>& b, std::size_t groups);

/// x[..., in] * W[out, in]^T + bias[out]. `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Max-shifted softmax along `axis`.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Mean over rows of -log softmax(logits[r, :])[targets[r]].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> targets);

/// Normalizes each row of x[..., d] to zero mean and unit (biased) variance,
/// then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

/// Rows divided by max(||row||, eps).
template <typename T> Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps = T(1e-12));

/// Cross-correlation. signal: [L, C_in] or [B, L, C_in]; kernels: [C_out, C_in, K];
/// bias: [C_out] or undefined. Output [L_out, C_out] (or [B, L_out, C_out]) with
/// L_out = floor((L + 2 pad - K) / stride) + 1.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& signal, const Tensor<T>& kernels, const Tensor<T>& bias,
                 std::size_t stride, std::size_t zero_pad);

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                 std::size_t zero_pad);

/// x: [B, C, H, W]; kernels: [C_out, C, kh, kw]; bias: [C_out] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias,
                 std::size_t stride, std::size_t zero_pad);

/// [B, C, H, W] -> [B, C] mean over the spatial grid.
template <typename T> Tensor<T> spatial_mean(const Tensor<T>& x);

/// Marks an output row that should be all zeros in gather_rows.
inline constexpr std::ptrdiff_t kZeroRow = -1;

/// Selects rows along dim 0 (rows may repeat); kZeroRow yields zeros.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::ptrdiff_t> rows);

/// Stacks tensors along dim 0; trailing extents must agree.
template <typename T> Tensor<T> concat_rows(std::span<const Tensor<T>> parts);

/// x: [G*T, n] -> [G, n], the mean of each group of T consecutive rows.
template <typename T> Tensor<T> segment_mean(const Tensor<T>& x, std::size_t groups);

/// Like segment_mean but only rows with mask[t] != 0 contribute; `mask` has
/// length T and is shared by every group.
template <typename T>
Tensor<T> masked_segment_mean(const Tensor<T>& x, std::size_t groups, std::span<const T> mask);

/// Multi-head scaled dot-product attention over G independent groups of T
/// tokens. q, k, v: [G*T, d]. Keys with key_mask[t] == 0 are excluded from
/// every softmax; an empty key_mask means all keys are real.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    std::size_t groups, std::size_t heads, std::span<const T> key_mask = {});

}  // namespace brainformer::numerics
