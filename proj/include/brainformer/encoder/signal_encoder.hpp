// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "brainformer/data/fmri.hpp"
#include "brainformer/model/parameters.hpp"
#include "brainformer/numerics/tensor.hpp"

namespace brainformer::encoder {

using numerics::Tensor;

/// How position enters the token sequence.
enum class PositionalMode {
  kVoxel3d,  // linear projection of window-averaged voxel coordinates
  kIndex,    // learned embedding per token index
};

struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t kernel = 32;
  std::size_t stride = 16;
  PositionalMode positional = PositionalMode::kVoxel3d;
  /// Rows of the learned index table (index mode only).
  std::size_t max_tokens = 0;
};

/// Smallest length >= max(n, kernel) for which (length - kernel) is a
/// multiple of stride. Throws UsageError for an empty signal.
std::size_t padded_length(std::size_t n, std::size_t kernel, std::size_t stride);

/// Tokens produced for an n-voxel signal.
std::size_t token_count(std::size_t n, std::size_t kernel, std::size_t stride);

/// Mean coordinate of the real voxels under each conv window, row-major
/// [token_count, 3]. Tail padding positions are not averaged.
std::vector<double> window_coordinate_means(const data::RoiLayout& coords, std::size_t kernel, std::size_t stride);

/// Conv1D voxel-signal encoder fused with the 3D voxel embedding.
template <typename T>
class SignalEncoder {
 public:
  SignalEncoder(const EncoderConfig& config, model::ParameterSet<T>& params, Rng& rng, const std::string& prefix);

  const EncoderConfig& config() const { return config_; }

  /// values: [N] -> [L, d] or [B, N] -> [B, L, d]. The tail is zero-padded
  /// to padded_length before the strided convolution.
  Tensor<T> encode_signal(const Tensor<T>& values) const;

  /// [L, d] positional tokens for one ROI layout, matching encode_signal's L.
  Tensor<T> voxel_embed(const data::RoiLayout& coords) const;

  /// Learned [L, d] index embedding (index mode only).
  Tensor<T> index_embed(std::size_t tokens) const;

  /// Positional tokens for the configured mode.
  Tensor<T> positional(const data::RoiLayout& coords) const;

  /// values [B, N] -> fused tokens [B * L, d].
  Tensor<T> forward(const Tensor<T>& values, const data::RoiLayout& coords) const;

  const Tensor<T>& conv_kernels() const { return conv_kernels_; }
  const Tensor<T>& conv_bias() const { return conv_bias_; }
  const Tensor<T>& voxel_weight() const { return voxel_weight_; }
  const Tensor<T>& voxel_bias() const { return voxel_bias_; }

 private:
  EncoderConfig config_;
  Tensor<T> conv_kernels_;  // [d, 1, K]
  Tensor<T> conv_bias_;     // [d]
  Tensor<T> voxel_weight_;  // [d, 3]
  Tensor<T> voxel_bias_;    // [d]
  Tensor<T> index_table_;   // [max_tokens, d], index mode only
};

/// Elementwise sum of conv tokens and positional tokens.
template <typename T>
Tensor<T> fuse(const Tensor<T>& signal_tokens, const Tensor<T>& positional_tokens);

}  // namespace brainformer::encoder
