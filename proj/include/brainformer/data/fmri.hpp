// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace brainformer::data {

/// Visual-cortex regions of interest, in roi_id order.
inline constexpr std::size_t kRoiCount = 6;
inline constexpr std::array<std::string_view, kRoiCount> kRoiNames = {
    "prf-visualrois", "floc-bodies", "floc-faces", "floc-places", "floc-words", "streams"};

/// Scanner-grid position of one voxel (arbitrary units).
struct VoxelCoord {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  bool operator==(const VoxelCoord&) const = default;
};

using RoiLayout = std::vector<VoxelCoord>;

/// One region's response vector. Coordinates are shared by every sample of a
/// dataset (one subject's anatomy), hence the shared pointer.
struct RoiSignal {
  std::uint32_t roi_id = 0;
  std::vector<float> values;
  std::shared_ptr<const RoiLayout> coords;
};

/// Channel-major (CHW) image with pixels in [0, 1].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;
};

struct FmriSample {
  std::vector<RoiSignal> rois;
  Image image;
  /// Generator ground truth. Never fed to a model; used by oracle evaluations.
  std::vector<float> latent;
};

enum class Split : std::uint8_t { kTrain, kTest };

/// Parameters of the synthetic generator, echoed into the manifest.
struct GeneratorConfig {
  std::size_t n_samples = 512;
  std::array<std::size_t, kRoiCount> roi_sizes = {128, 128, 128, 128, 128, 128};
  std::size_t image_size = 32;
  std::size_t latent_dim = 4;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
  /// Trailing samples assigned to the test split.
  std::size_t test_count = 64;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::string generator_version;
  GeneratorConfig generator;
  std::vector<Split> splits;  // one tag per sample
};

struct Dataset {
  std::vector<std::shared_ptr<const RoiLayout>> roi_layouts;  // kRoiCount entries
  std::vector<FmriSample> samples;
  Manifest manifest;

  std::size_t size() const { return samples.size(); }
  std::size_t latent_dim() const { return samples.empty() ? 0 : samples.front().latent.size(); }
  /// Sample indices carrying `split`, in ascending order.
  std::vector<std::size_t> indices(Split split) const;
  /// New dataset holding the given samples (layouts shared, splits carried over).
  Dataset subset(const std::vector<std::size_t>& which) const;
};

/// Checks every structural invariant of one sample. Returns human-readable
/// violations; an empty list means the sample is valid.
std::vector<std::string> validate_sample(const FmriSample& sample);

/// Checks every sample plus dataset-level invariants (shared layouts, split
/// tags covering all samples).
std::vector<std::string> validate_dataset(const Dataset& dataset);

}  // namespace brainformer::data
