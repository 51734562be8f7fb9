// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "brainformer/data/fmri.hpp"
#include "brainformer/encoder/signal_encoder.hpp"
#include "brainformer/losses/losses.hpp"
#include "brainformer/model/parameters.hpp"
#include "brainformer/msft/msft.hpp"
#include "brainformer/numerics/tensor.hpp"
#include "brainformer/vision/vision_stub.hpp"

namespace brainformer::model {

struct ModelConfig {
  encoder::EncoderConfig encoder;
  msft::MsftConfig msft;
  vision::VisionConfig vision;
  bool share_roi_blocks = true;
  /// Guidance targets are the ROI tokens after the ROI-correlation block;
  /// false uses the per-ROI stack outputs instead.
  bool guidance_after_block = true;
  bool normalize_features = true;
};

template <typename T>
struct Batch {
  std::array<Tensor<T>, data::kRoiCount> roi_values;  // [B, N_k]
  Tensor<T> images;                                     // [B, 3, H, W]
  std::size_t size = 0;
};

template <typename T>
Batch<T> make_batch(const data::Dataset& dataset, std::span<const std::size_t> indices);

template <typename T>
struct Outputs {
  Tensor<T> featmap;  // [B, C, h, w]
  Tensor<T> p;        // [B, d] image feature
  Tensor<T> pbar;     // [B, 6, d] image ROI features
  Tensor<T> q;        // [B, d] brain cognitive feature
  Tensor<T> qbar;     // [B, 6, d] ROI features used by the guidance loss
};

template <typename T>
struct LossTerms {
  Tensor<T> l_con, l_bfg, total;
};

/// fMRI encoder, vision stub and temperature over one ParameterSet.
template <typename T>
class Brainformer {
 public:
  /// `layouts` fixes the per-ROI voxel counts and coordinates.
  Brainformer(const ModelConfig& config, std::vector<std::shared_ptr<const data::RoiLayout>> layouts, Rng& rng);

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  losses::Temperature<T>& temperature() { return *temperature_; }
  const vision::VisionStub<T>& vision() const { return *vision_; }
  const encoder::SignalEncoder<T>& signal_encoder() const { return *encoder_; }

  /// [B*6, d] per-ROI stack outputs, row b*6 + k.
  Tensor<T> roi_tokens(const Batch<T>& batch) const;
  Outputs<T> forward(const Batch<T>& batch) const;
  Outputs<T> encode_fmri(const Batch<T>& batch) const;  // fills q and qbar only
  Outputs<T> encode_images(const Tensor<T>& images) const;  // fills featmap, p and pbar

  /// Losses on a forward pass. With `track_guidance` false the guidance term
  /// is computed on detached features, so it is reported but never optimized.
  LossTerms<T> losses(const Outputs<T>& out, double lambda_con, double lambda_bfg, bool track_guidance = true) const;

 private:
  ModelConfig config_;
  std::vector<std::shared_ptr<const data::RoiLayout>> layouts_;
  ParameterSet<T> params_;
  std::unique_ptr<encoder::SignalEncoder<T>> encoder_;
  std::vector<msft::MsftStack<T>> stacks_;  // one, or one per ROI
  std::unique_ptr<msft::TransBlock<T>> final_block_;
  std::unique_ptr<vision::VisionStub<T>> vision_;
  std::unique_ptr<losses::Temperature<T>> temperature_;
};

}  // namespace brainformer::model
