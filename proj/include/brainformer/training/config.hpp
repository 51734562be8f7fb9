// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "brainformer/encoder/signal_encoder.hpp"
#include "brainformer/model/brainformer.hpp"

namespace brainformer::training {

/// Every training hyperparameter. Config files are JSON objects whose keys
/// are exactly these field names; absent keys keep their defaults.
struct TrainConfig {
  std::size_t d_r = 64;
  std::size_t K = 32;
  std::size_t conv_stride = 16;
  std::size_t w = 64;
  std::size_t s = 32;
  std::size_t h = 2;
  std::size_t n_heads = 4;
  double lr = 1e-4;
  std::size_t batch = 64;
  std::size_t epochs = 100;
  double lambda_con = 0.5;
  double lambda_bfg = 0.5;
  std::uint64_t seed = 0;
  bool normalize_features = true;
  bool share_roi_blocks = true;
  encoder::PositionalMode positional_mode = encoder::PositionalMode::kVoxel3d;
  /// Guidance targets taken after the ROI-correlation block.
  bool guidance_after_block = true;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// When positive, training stops after this many steps and the cosine
  /// schedule spans exactly these steps.
  std::size_t max_steps = 0;
  /// Write a checkpoint every this many steps (0: only at the end).
  std::size_t checkpoint_every = 0;
};

std::string to_json(const TrainConfig& config);
/// Throws ValidationError on unknown keys, wrong types or invalid values.
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

/// Applies one "key=value" override. Throws ValidationError on bad input.
void apply_override(TrainConfig& config, const std::string& assignment);

/// Throws ValidationError if any field is out of range.
void validate_config(const TrainConfig& config);

std::string positional_mode_name(encoder::PositionalMode mode);
encoder::PositionalMode parse_positional_mode(const std::string& name);

model::ModelConfig model_config(const TrainConfig& config);

}  // namespace brainformer::training
