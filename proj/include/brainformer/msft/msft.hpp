// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "brainformer/model/parameters.hpp"
#include "brainformer/numerics/tensor.hpp"
#include "brainformer/rng.hpp"

namespace brainformer::msft {

using numerics::Tensor;

/// Overlapping windows of width w taken every s tokens.
struct WindowPlan {
  std::size_t length = 0;  // N
  std::size_t width = 0;   // w
  std::size_t step = 0;    // s
  std::size_t count = 0;   // ceil(N / s)

  std::size_t begin(std::size_t i) const { return i * step; }
  /// Tokens of window i that lie inside the sequence.
  std::size_t real_count(std::size_t i) const;
};

/// Throws UsageError unless N >= 1 and w >= s >= 1.
WindowPlan window_plan(std::size_t n, std::size_t w, std::size_t s);

/// Sequence lengths seen by each level plus the final length:
/// lengths[0] = n, lengths[l + 1] = ceil(lengths[l] / s).
std::vector<std::size_t> level_lengths(std::size_t n, std::size_t s, std::size_t levels);

template <typename T>
struct Windows {
  Tensor<T> tokens;     // [n_s, w, d], zero past the end of the sequence
  std::vector<T> mask;  // [n_s * w], 1 for real positions
  WindowPlan plan;
};

/// seq: [N, d].
template <typename T>
Windows<T> slice_windows(const Tensor<T>& seq, std::size_t w, std::size_t s);

/// Masked mean of tokens [w, d] over positions with mask != 0 -> [d].
template <typename T>
Tensor<T> pool_window(const Tensor<T>& tokens, std::span<const T> mask);

/// Pre-norm transformer block: x + Wo attn(LN1 x), then h + W2 gelu(W1 LN2 h).
template <typename T>
class TransBlock {
 public:
  TransBlock(std::size_t d_model, std::size_t heads, model::ParameterSet<T>& params, Rng& rng,
             const std::string& prefix);

  std::size_t d_model() const { return d_; }
  std::size_t heads() const { return heads_; }

  /// x: [G*T, d], G independent sequences with every token real.
  Tensor<T> forward(const Tensor<T>& x, std::size_t groups) const;

  /// tokens: [T, d]. Positions with mask == 0 are excluded as keys and their
  /// outputs are zero.
  Tensor<T> forward_masked(const Tensor<T>& tokens, std::span<const T> mask) const;

  // Named handles, exposed for tests. The key projection has no bias: it
  // would shift every logit of a query equally and cancel in the softmax.
  Tensor<T> ln1_gamma, ln1_beta, wq, bq, wk, wv, bv, wo, bo;
  Tensor<T> ln2_gamma, ln2_beta, w1, b1, w2, b2;

 private:
  Tensor<T> attend(const Tensor<T>& x, std::size_t groups, std::span<const T> mask) const;

  std::size_t d_;
  std::size_t heads_;
};

struct MsftConfig {
  std::size_t window = 64;
  std::size_t step = 32;
  std::size_t levels = 2;
  std::size_t heads = 4;
};

/// Hierarchical windowed transformer for one ROI's token sequence.
template <typename T>
class MsftStack {
 public:
  MsftStack(const MsftConfig& config, std::size_t d_model, model::ParameterSet<T>& params, Rng& rng,
            const std::string& prefix);

  const MsftConfig& config() const { return config_; }
  const std::vector<TransBlock<T>>& blocks() const { return blocks_; }

  /// r: [N, d] -> [d]. Windows are materialized with padding and masks.
  Tensor<T> forward_single(const Tensor<T>& r) const;

  /// r: [B*N, d] holding B sequences of N tokens -> [B, d]. Only real tokens
  /// of each window are fed to the block, so padding costs nothing.
  /// Optionally records the length seen at each level and the final length.
  Tensor<T> forward(const Tensor<T>& r, std::size_t batch, std::vector<std::size_t>* trace = nullptr) const;

 private:
  MsftConfig config_;
  std::vector<TransBlock<T>> blocks_;
};

template <typename T>
struct CognitiveFeatures {
  Tensor<T> q;        // [B, d], mean of roi_out per sample
  Tensor<T> roi_out;  // [B*6, d]
};

/// roi_feats: [B*6, d] (6 ROI tokens per sample). The final block attends
/// across the ROIs of each sample. Throws UsageError if rows != 6 * batch.
template <typename T>
CognitiveFeatures<T> cognitive_features(const Tensor<T>& roi_feats, const TransBlock<T>& final_block,
                                        std::size_t batch = 1);

}  // namespace brainformer::msft
