// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "brainformer/data/fmri.hpp"

namespace brainformer::data {

inline constexpr std::string_view kGeneratorVersion = "bfmr-synth-2";

/// Distance along x between the origins of consecutive ROI lattices.
inline constexpr double kRoiOffset = 1.25;

/// Fixed, seed-determined part of one ROI's response model:
///   value_i = gain_i * (mixing * z)[component_i] + noise
struct RoiResponseModel {
  std::size_t latent_dim = 0;
  std::vector<double> mixing;            // latent_dim x latent_dim, row-major
  std::vector<std::uint32_t> component;  // latent component each voxel reads
  std::vector<double> gain;              // smooth spatial gain per voxel
};

struct GenerativeModel {
  std::vector<std::shared_ptr<const RoiLayout>> layouts;
  std::vector<RoiResponseModel> rois;
  /// Per blob and channel colour slope, latent_dim x 3.
  std::vector<double> colour_slopes;
};

/// Lattice layout of ROI `roi_id` with `count` voxels. Voxels are listed in
/// raster order (x fastest) on a cube of side ceil(cbrt(count)) scaled to
/// unit extent, shifted along x by roi_id * kRoiOffset so regions never overlap.
RoiLayout roi_lattice(std::size_t roi_id, std::size_t count);

/// Smooth positive gain s_k(coord) in [0.5, 1.5].
double spatial_gain(std::size_t roi_id, const VoxelCoord& c);

/// Latent component read by voxel i: contiguous runs of the raster order, so
/// each component occupies a compact slab of the lattice.
std::size_t latent_component(std::size_t voxel, std::size_t count, std::size_t latent_dim);

/// Side of the cube holding `count` voxels.
std::size_t lattice_side(std::size_t count);

GenerativeModel build_generative_model(const GeneratorConfig& config);

/// Geometry of blob j for latent z, in pixel units.
struct Blob {
  double cx = 0.0;
  double cy = 0.0;
  double sigma = 0.0;
  double colour[3] = {0.0, 0.0, 0.0};
};

std::vector<Blob> blobs_for_latent(std::span<const float> latent, std::size_t image_size,
                                   const GenerativeModel& model);

/// Noise-free rendering (before clipping) of the blobs as a CHW image.
std::vector<double> render_blobs(const std::vector<Blob>& blobs, std::size_t image_size);

/// Pixels within `radius_sigmas` blob widths of any blob centre (row-major HxW).
std::vector<std::uint8_t> blob_mask(const std::vector<Blob>& blobs, std::size_t image_size,
                                    double radius_sigmas = 1.5);

/// Paired fMRI/image samples whose images and voxel responses are both
/// deterministic functions of a hidden Gaussian latent. Identical config and
/// seed give bitwise identical datasets.
Dataset generate_synthetic(const GeneratorConfig& config);

}  // namespace brainformer::data
