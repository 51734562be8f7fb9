// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/data/fmri.hpp"

#include <cmath>

namespace brainformer::data {

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.splits.size(); ++i) {
    if (manifest.splits[i] == split) out.push_back(i);
  }
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& which) const {
  Dataset out;
  out.roi_layouts = roi_layouts;
  out.manifest = manifest;
  out.manifest.splits.clear();
  for (const std::size_t i : which) {
    out.samples.push_back(samples.at(i));
    out.manifest.splits.push_back(i < manifest.splits.size() ? manifest.splits[i] : Split::kTrain);
  }
  out.manifest.generator.n_samples = out.samples.size();
  return out;
}

std::vector<std::string> validate_sample(const FmriSample& sample) {
  std::vector<std::string> issues;
  std::array<bool, kRoiCount> seen{};
  for (const auto& roi : sample.rois) {
    if (roi.roi_id >= kRoiCount) {
      issues.push_back("roi_id " + std::to_string(roi.roi_id) + " out of range");
      continue;
    }
    const std::string name = "roi " + std::to_string(roi.roi_id);
    if (seen[roi.roi_id]) issues.push_back("duplicate roi_id " + std::to_string(roi.roi_id));
    seen[roi.roi_id] = true;
    if (roi.values.empty()) issues.push_back(name + ": no voxels");
    if (!roi.coords) {
      issues.push_back(name + ": missing coordinates");
    } else {
      if (roi.coords->size() != roi.values.size()) {
        issues.push_back(name + ": " + std::to_string(roi.values.size()) + " values but " +
                         std::to_string(roi.coords->size()) + " coordinates");
      }
      for (std::size_t i = 0; i < roi.coords->size(); ++i) {
        const auto& c = (*roi.coords)[i];
        if (!std::isfinite(c.x) || !std::isfinite(c.y) || !std::isfinite(c.z)) {
          issues.push_back(name + ": non-finite coordinate at voxel " + std::to_string(i));
        }
      }
    }
    for (std::size_t i = 0; i < roi.values.size(); ++i) {
      if (!std::isfinite(roi.values[i])) {
        issues.push_back(name + ": non-finite value at voxel " + std::to_string(i));
      }
    }
  }
  for (std::size_t k = 0; k < kRoiCount; ++k) {
    if (!seen[k]) issues.push_back("missing roi_id " + std::to_string(k));
  }

  const auto& img = sample.image;
  if (img.channels != 3 || img.height == 0 || img.width == 0) {
    issues.push_back("image: expected 3 channels and a non-empty grid");
  }
  if (img.pixels.size() != img.channels * img.height * img.width) {
    issues.push_back("image: pixel count does not match dimensions");
  }
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const float p = img.pixels[i];
    if (!(p >= 0.0f && p <= 1.0f)) {
      issues.push_back("image: pixel " + std::to_string(i) + " outside [0, 1]");
      break;
    }
  }
  for (const float z : sample.latent) {
    if (!std::isfinite(z)) {
      issues.push_back("latent: non-finite entry");
      break;
    }
  }
  return issues;
}

std::vector<std::string> validate_dataset(const Dataset& dataset) {
  std::vector<std::string> issues;
  if (dataset.roi_layouts.size() != kRoiCount) issues.push_back("dataset: expected 6 ROI layouts");
  if (dataset.manifest.splits.size() != dataset.samples.size()) {
    issues.push_back("dataset: split tags do not cover every sample");
  }
  for (std::size_t s = 0; s < dataset.samples.size(); ++s) {
    const auto& sample = dataset.samples[s];
    for (auto& issue : validate_sample(sample)) issues.push_back("sample " + std::to_string(s) + ": " + issue);
    for (const auto& roi : sample.rois) {
      if (roi.roi_id < dataset.roi_layouts.size() && roi.coords && dataset.roi_layouts[roi.roi_id] &&
          *roi.coords != *dataset.roi_layouts[roi.roi_id]) {
        issues.push_back("sample " + std::to_string(s) + ": roi " + std::to_string(roi.roi_id) +
                         " does not use the shared voxel layout");
      }
    }
    if (!dataset.samples.empty() && sample.latent.size() != dataset.samples.front().latent.size()) {
      issues.push_back("sample " + std::to_string(s) + ": latent size differs");
    }
  }
  return issues;
}

}  // namespace brainformer::data
