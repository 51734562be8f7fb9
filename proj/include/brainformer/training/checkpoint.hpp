// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "brainformer/data/fmri.hpp"
#include "brainformer/model/brainformer.hpp"
#include "brainformer/training/config.hpp"
#include "brainformer/training/optimizer.hpp"

namespace brainformer::training {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  numerics::Shape shape;
  std::vector<float> values;
};

/// Everything needed to evaluate a model or continue training bitwise.
///
/// Layout (little-endian): "BFCK", version u32, config JSON (u32 length +
/// bytes), step u64, optimizer step u64, shuffle RNG state string, parameter
/// count u32, then per parameter: name string, rank u32, dims u32 each,
/// values f32 each, first moments f32 each, second moments f32 each.
struct Checkpoint {
  TrainConfig config;
  std::uint64_t step = 0;
  std::uint64_t optimizer_steps = 0;
  /// Shuffle RNG state at the start of the epoch that contains `step + 1`.
  std::string rng_state;
  std::vector<NamedArray> params;
  std::vector<std::vector<float>> first_moments;
  std::vector<std::vector<float>> second_moments;
};

std::vector<char> encode_checkpoint(const Checkpoint& checkpoint);
/// Throws FormatError (with byte offset) on bad magic, version or truncation.
Checkpoint decode_checkpoint(const std::vector<char>& bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint capture_checkpoint(const TrainConfig& config, const model::Brainformer<float>& model,
                              const AdamW<float>* optimizer, std::uint64_t step, const std::string& rng_state);

/// Copies stored values into a model built from the same config. Throws
/// ValidationError on any name or shape mismatch.
void restore_parameters(const Checkpoint& checkpoint, model::Brainformer<float>& model);
void restore_optimizer(const Checkpoint& checkpoint, AdamW<float>& optimizer);

/// Builds the model described by the checkpoint's config over the dataset's
/// voxel layouts and loads its parameters.
std::unique_ptr<model::Brainformer<float>> model_from_checkpoint(const Checkpoint& checkpoint,
                                                                 const data::Dataset& dataset);

}  // namespace brainformer::training
