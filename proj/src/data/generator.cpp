// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/data/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "brainformer/error.hpp"
#include "brainformer/rng.hpp"

namespace brainformer::data {

namespace {

// Stream tags for derive_seed; fixed so datasets stay reproducible.
constexpr std::uint64_t kLatentStream = 1;
constexpr std::uint64_t kColourStream = 2;
constexpr std::uint64_t kMixingStream = 100;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_config(const GeneratorConfig& c) {
  if (c.n_samples == 0) throw UsageError("generate_synthetic: n_samples must be positive");
  for (std::size_t k = 0; k < kRoiCount; ++k) {
    if (c.roi_sizes[k] < 64) {
      throw UsageError("generate_synthetic: roi " + std::to_string(k) + " has " + std::to_string(c.roi_sizes[k]) +
                       " voxels, need at least 64");
    }
  }
  if (c.latent_dim < 2) throw UsageError("generate_synthetic: latent_dim must be at least 2");
  if (!(c.noise_std >= 0.0) || !std::isfinite(c.noise_std)) {
    throw UsageError("generate_synthetic: noise_std must be finite and non-negative");
  }
  if (c.image_size == 0 || c.image_size % 16 != 0) {
    throw UsageError("generate_synthetic: image_size must be a positive multiple of 16");
  }
  if (c.test_count >= c.n_samples) throw UsageError("generate_synthetic: test_count must leave training samples");
}

}  // namespace

std::size_t lattice_side(std::size_t count) {
  std::size_t side = 1;
  while (side * side * side < count) ++side;
  return side;
}

RoiLayout roi_lattice(std::size_t roi_id, std::size_t count) {
  const std::size_t side = lattice_side(count);
  const double spacing = 1.0 / static_cast<double>(side);
  const double x_offset = kRoiOffset * static_cast<double>(roi_id);
  RoiLayout layout;
  layout.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t x = i % side, y = (i / side) % side, z = i / (side * side);
    layout.push_back({static_cast<float>(x_offset + spacing * static_cast<double>(x)),
                      static_cast<float>(spacing * static_cast<double>(y)),
                      static_cast<float>(spacing * static_cast<double>(z))});
  }
  return layout;
}

double spatial_gain(std::size_t roi_id, const VoxelCoord& c) {
  const double period = 2.0 * (1.0 + 0.25 * static_cast<double>(roi_id));
  const double phase = 2.0 * std::numbers::pi * (c.x + 0.5 * c.y + 0.25 * c.z) / period;
  return 1.0 + 0.5 * std::sin(phase);
}

std::size_t latent_component(std::size_t voxel, std::size_t count, std::size_t latent_dim) {
  return voxel * latent_dim / count;
}

GenerativeModel build_generative_model(const GeneratorConfig& config) {
  check_config(config);
  const std::size_t dim = config.latent_dim;
  GenerativeModel model;
  for (std::size_t k = 0; k < kRoiCount; ++k) {
    const std::size_t count = config.roi_sizes[k];
    auto layout = std::make_shared<RoiLayout>(roi_lattice(k, count));

    RoiResponseModel roi;
    roi.latent_dim = dim;
    Rng rng(derive_seed(config.seed, kMixingStream + k));
    roi.mixing.resize(dim * dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (auto& w : roi.mixing) w = rng.normal() * scale;
    for (std::size_t i = 0; i < count; ++i) {
      roi.component.push_back(static_cast<std::uint32_t>(latent_component(i, count, dim)));
      roi.gain.push_back(spatial_gain(k, (*layout)[i]));
    }
    model.layouts.push_back(std::move(layout));
    model.rois.push_back(std::move(roi));
  }
  Rng colour_rng(derive_seed(config.seed, kColourStream));
  model.colour_slopes.resize(dim * 3);
  for (auto& s : model.colour_slopes) s = 2.0 * colour_rng.normal();
  return model;
}

std::vector<Blob> blobs_for_latent(std::span<const float> latent, std::size_t image_size,
                                   const GenerativeModel& model) {
  const std::size_t dim = latent.size();
  const double size = static_cast<double>(image_size);
  std::vector<Blob> blobs(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    const double zj = latent[j];
    const double zn = latent[(j + 1) % dim];
    const double zw = latent[(j + 2) % dim];
    Blob& b = blobs[j];
    b.cx = size * (0.5 + 0.35 * std::tanh(zj));
    b.cy = size * (0.5 + 0.35 * std::tanh(zn));
    b.sigma = size * 0.07 * (1.0 + 0.3 * std::tanh(zw));
    for (std::size_t ch = 0; ch < 3; ++ch) {
      b.colour[ch] = 0.25 + 0.75 * sigmoid(model.colour_slopes[j * 3 + ch] * zj);
    }
  }
  return blobs;
}

std::vector<double> render_blobs(const std::vector<Blob>& blobs, std::size_t image_size) {
  const std::size_t plane = image_size * image_size;
  std::vector<double> img(3 * plane, 0.0);
  for (std::size_t y = 0; y < image_size; ++y) {
    for (std::size_t x = 0; x < image_size; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      for (const auto& b : blobs) {
        const double r2 = (px - b.cx) * (px - b.cx) + (py - b.cy) * (py - b.cy);
        const double env = std::exp(-r2 / (2.0 * b.sigma * b.sigma));
        for (std::size_t ch = 0; ch < 3; ++ch) img[ch * plane + y * image_size + x] += b.colour[ch] * env;
      }
    }
  }
  return img;
}

std::vector<std::uint8_t> blob_mask(const std::vector<Blob>& blobs, std::size_t image_size, double radius_sigmas) {
  std::vector<std::uint8_t> mask(image_size * image_size, 0);
  for (std::size_t y = 0; y < image_size; ++y) {
    for (std::size_t x = 0; x < image_size; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      for (const auto& b : blobs) {
        const double r = std::hypot(px - b.cx, py - b.cy);
        if (r <= radius_sigmas * b.sigma) {
          mask[y * image_size + x] = 1;
          break;
        }
      }
    }
  }
  return mask;
}

Dataset generate_synthetic(const GeneratorConfig& config) {
  const GenerativeModel model = build_generative_model(config);
  const std::size_t dim = config.latent_dim;
  Dataset ds;
  ds.roi_layouts = model.layouts;
  ds.manifest.seed = config.seed;
  ds.manifest.generator_version = std::string(kGeneratorVersion);
  ds.manifest.generator = config;

  Rng latent_rng(derive_seed(config.seed, kLatentStream));
  ds.samples.reserve(config.n_samples);
  for (std::size_t s = 0; s < config.n_samples; ++s) {
    FmriSample sample;
    sample.latent.resize(dim);
    for (auto& z : sample.latent) z = static_cast<float>(latent_rng.normal());

    const auto blobs = blobs_for_latent(sample.latent, config.image_size, model);
    const auto clean = render_blobs(blobs, config.image_size);
    sample.image.channels = 3;
    sample.image.height = sample.image.width = config.image_size;
    sample.image.pixels.resize(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
      const double noisy = clean[i] + (config.noise_std > 0.0 ? config.noise_std * latent_rng.normal() : 0.0);
      sample.image.pixels[i] = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
    }

    for (std::size_t k = 0; k < kRoiCount; ++k) {
      const auto& roi_model = model.rois[k];
      std::vector<double> mixed(dim, 0.0);
      for (std::size_t r = 0; r < dim; ++r)
        for (std::size_t c = 0; c < dim; ++c) mixed[r] += roi_model.mixing[r * dim + c] * sample.latent[c];
      RoiSignal roi;
      roi.roi_id = static_cast<std::uint32_t>(k);
      roi.coords = model.layouts[k];
      roi.values.resize(config.roi_sizes[k]);
      for (std::size_t i = 0; i < roi.values.size(); ++i) {
        double v = roi_model.gain[i] * mixed[roi_model.component[i]];
        if (config.noise_std > 0.0) v += config.noise_std * latent_rng.normal();
        roi.values[i] = static_cast<float>(v);
      }
      sample.rois.push_back(std::move(roi));
    }
    ds.samples.push_back(std::move(sample));
  }
  ds.manifest.splits.assign(config.n_samples, Split::kTrain);
  for (std::size_t s = config.n_samples - config.test_count; s < config.n_samples; ++s) {
    ds.manifest.splits[s] = Split::kTest;
  }
  return ds;
}

}  // namespace brainformer::data
