// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "brainformer/data/fmri.hpp"

namespace brainformer::data {

// Binary layout, all integers u32 and all reals f32, little-endian:
//   "BFMR" | version=1 | n_samples | n_rois=6 | c | h | w | latent_dim
//   per ROI:    voxel_count | voxel_count x (x, y, z)
//   per sample: latent[latent_dim] | image[c*h*w] (CHW) | per ROI values[voxel_count]
inline constexpr char kDatasetMagic[4] = {'B', 'F', 'M', 'R'};
inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<char> encode_dataset(const Dataset& dataset);
/// Throws FormatError naming the byte offset of the first problem.
Dataset decode_dataset(const std::vector<char>& bytes);

/// Sidecar holding seed, generator parameters and split tags as JSON.
std::filesystem::path manifest_path(const std::filesystem::path& dataset_path);
std::string encode_manifest(const Manifest& manifest);
Manifest decode_manifest(const std::string& text);

/// Writes the binary file and its manifest sidecar.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
/// Reads both files. A missing sidecar marks every sample as training data.
Dataset load_dataset(const std::filesystem::path& path);

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<char>& bytes);

}  // namespace brainformer::data
