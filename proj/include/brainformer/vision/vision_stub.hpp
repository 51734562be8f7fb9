// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "brainformer/model/parameters.hpp"
#include "brainformer/numerics/tensor.hpp"
#include "brainformer/rng.hpp"

namespace brainformer::vision {

using numerics::Tensor;

inline constexpr std::size_t kStageCount = 4;

struct VisionConfig {
  std::array<std::size_t, kStageCount> channels{16, 32, 64, 64};
  std::size_t d_model = 64;
};

/// Small strided CNN: four 3x3 stride-2 conv stages with GELU, a global
/// projection head and six ROI heads over the pooled feature.
template <typename T>
class VisionStub {
 public:
  VisionStub(const VisionConfig& config, model::ParameterSet<T>& params, Rng& rng, const std::string& prefix);

  const VisionConfig& config() const { return config_; }
  std::size_t feature_channels() const { return config_.channels.back(); }

  /// [3, H, W] -> [C, H/16, W/16] or [B, 3, H, W] -> [B, C, H/16, W/16].
  Tensor<T> encode_image(const Tensor<T>& images) const;

  /// featmap -> p: [d] for one map, [B, d] for a batch.
  Tensor<T> global_feature(const Tensor<T>& featmap) const;

  /// featmap -> [6, d] for one map, [B*6, d] for a batch (row b*6 + k).
  Tensor<T> roi_features(const Tensor<T>& featmap) const;

  std::vector<Tensor<T>> stage_kernels, stage_biases;
  Tensor<T> global_head;                    // [d, C]
  std::vector<Tensor<T>> roi_head_weights;  // 6 x [d, C]
  std::vector<Tensor<T>> roi_head_biases;   // 6 x [d]

 private:
  Tensor<T> pooled(const Tensor<T>& featmap, bool& single) const;

  VisionConfig config_;
};

}  // namespace brainformer::vision
