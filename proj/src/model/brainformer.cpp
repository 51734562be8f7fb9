// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/model/brainformer.hpp"

#include <algorithm>

#include "brainformer/error.hpp"
#include "brainformer/numerics/ops.hpp"

namespace brainformer::model {

namespace ops = numerics;
using data::kRoiCount;

template <typename T>
Batch<T> make_batch(const data::Dataset& dataset, std::span<const std::size_t> indices) {
  if (indices.empty()) throw UsageError("make_batch: empty batch");
  const std::size_t b = indices.size();
  Batch<T> batch;
  batch.size = b;
  for (std::size_t k = 0; k < kRoiCount; ++k) {
    const std::size_t n = dataset.roi_layouts.at(k)->size();
    std::vector<T> values;
    values.reserve(b * n);
    for (const std::size_t i : indices) {
      const auto& v = dataset.samples.at(i).rois.at(k).values;
      if (v.size() != n) throw ValidationError("make_batch: sample " + std::to_string(i) + " has a bad ROI length");
      values.insert(values.end(), v.begin(), v.end());
    }
    batch.roi_values[k] = Tensor<T>({b, n}, std::move(values));
  }
  const auto& first = dataset.samples.at(indices[0]).image;
  std::vector<T> pixels;
  pixels.reserve(b * first.pixels.size());
  for (const std::size_t i : indices) {
    const auto& img = dataset.samples.at(i).image;
    if (img.pixels.size() != first.pixels.size()) throw ValidationError("make_batch: image sizes differ");
    pixels.insert(pixels.end(), img.pixels.begin(), img.pixels.end());
  }
  batch.images = Tensor<T>({b, first.channels, first.height, first.width}, std::move(pixels));
  return batch;
}

template <typename T>
Brainformer<T>::Brainformer(const ModelConfig& config, std::vector<std::shared_ptr<const data::RoiLayout>> layouts,
                            Rng& rng)
    : config_(config), layouts_(std::move(layouts)) {
  if (layouts_.size() != kRoiCount) throw UsageError("Brainformer: need one voxel layout per ROI");
  const std::size_t d = config.encoder.d_model;
  if (config.vision.d_model != d) throw UsageError("Brainformer: vision and fMRI widths differ");
  std::size_t max_tokens = 0;
  for (const auto& layout : layouts_) {
    if (!layout || layout->empty()) throw UsageError("Brainformer: empty ROI layout");
    max_tokens = std::max(max_tokens, encoder::token_count(layout->size(), config.encoder.kernel, config.encoder.stride));
  }
  config_.encoder.max_tokens = std::max(config_.encoder.max_tokens, max_tokens);

  encoder_ = std::make_unique<encoder::SignalEncoder<T>>(config_.encoder, params_, rng, "encoder.");
  const std::size_t stacks = config.share_roi_blocks ? 1 : kRoiCount;
  for (std::size_t k = 0; k < stacks; ++k) {
    const std::string prefix = config.share_roi_blocks ? "msft." : "msft.roi" + std::to_string(k) + ".";
    stacks_.emplace_back(config.msft, d, params_, rng, prefix);
  }
  final_block_ = std::make_unique<msft::TransBlock<T>>(d, config.msft.heads, params_, rng, "roi_block.");
  vision_ = std::make_unique<vision::VisionStub<T>>(config.vision, params_, rng, "vision.");
  temperature_ = std::make_unique<losses::Temperature<T>>(params_, "log_sigma");
}

template <typename T>
Tensor<T> Brainformer<T>::roi_tokens(const Batch<T>& batch) const {
  const std::size_t b = batch.size;
  std::array<Tensor<T>, kRoiCount> tokens;
  bool same_length = true;
  for (std::size_t k = 0; k < kRoiCount; ++k) {
    tokens[k] = encoder_->forward(batch.roi_values[k], *layouts_[k]);
    same_length = same_length && tokens[k].dim(0) == tokens[0].dim(0);
  }
  // Rows of `feats` are ROI-major (k*B + b).
  Tensor<T> feats;
  if (stacks_.size() == 1 && same_length) {
    // One shared stack over equal-length sequences runs as a single batch.
    feats = stacks_[0].forward(ops::concat_rows<T>(tokens), kRoiCount * b);
  } else {
    std::vector<Tensor<T>> parts;
    for (std::size_t k = 0; k < kRoiCount; ++k) {
      parts.push_back(stacks_[stacks_.size() == 1 ? 0 : k].forward(tokens[k], b));
    }
    feats = ops::concat_rows<T>(parts);
  }
  std::vector<std::ptrdiff_t> order(b * kRoiCount);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < kRoiCount; ++k) order[i * kRoiCount + k] = static_cast<std::ptrdiff_t>(k * b + i);
  return ops::gather_rows(feats, order);
}

template <typename T>
Outputs<T> Brainformer<T>::encode_fmri(const Batch<T>& batch) const {
  const std::size_t b = batch.size, d = config_.encoder.d_model;
  auto rois = roi_tokens(batch);
  auto cog = msft::cognitive_features(rois, *final_block_, b);
  Outputs<T> out;
  out.q = cog.q;
  out.qbar = ops::reshape(config_.guidance_after_block ? cog.roi_out : rois, {b, kRoiCount, d});
  return out;
}

template <typename T>
Outputs<T> Brainformer<T>::encode_images(const Tensor<T>& images) const {
  Outputs<T> out;
  out.featmap = vision_->encode_image(images);
  out.p = vision_->global_feature(out.featmap);
  out.pbar = ops::reshape(vision_->roi_features(out.featmap), {images.dim(0), kRoiCount, config_.vision.d_model});
  return out;
}

template <typename T>
Outputs<T> Brainformer<T>::forward(const Batch<T>& batch) const {
  Outputs<T> out = encode_images(batch.images);
  Outputs<T> brain = encode_fmri(batch);
  out.q = brain.q;
  out.qbar = brain.qbar;
  return out;
}

template <typename T>
LossTerms<T> Brainformer<T>::losses(const Outputs<T>& out, double lambda_con, double lambda_bfg,
                                    bool track_guidance) const {
  LossTerms<T> terms;
  const bool norm = config_.normalize_features;
  terms.l_con = losses::contrastive_loss(out.p, out.q, temperature_->log_sigma(), norm);
  terms.l_bfg = track_guidance ? losses::guidance_loss(out.pbar, out.qbar, norm)
                               : losses::guidance_loss(out.pbar.detach(), out.qbar.detach(), norm);
  terms.total = losses::total_loss(terms.l_con, terms.l_bfg, lambda_con, lambda_bfg);
  return terms;
}

template class Brainformer<float>;
template class Brainformer<double>;
template Batch<float> make_batch(const data::Dataset&, std::span<const std::size_t>);
template Batch<double> make_batch(const data::Dataset&, std::span<const std::size_t>);

}  // namespace brainformer::model
