// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/vision/vision_stub.hpp"

#include "brainformer/data/fmri.hpp"
#include "brainformer/error.hpp"
#include "brainformer/numerics/ops.hpp"

namespace brainformer::vision {

namespace ops = numerics;

template <typename T>
VisionStub<T>::VisionStub(const VisionConfig& config, model::ParameterSet<T>& params, Rng& rng,
                          const std::string& prefix)
    : config_(config) {
  std::size_t in = 3;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const std::size_t out = config.channels[s];
    if (out == 0) throw UsageError("VisionStub: stage width must be positive");
    const std::string name = prefix + "stage" + std::to_string(s);
    stage_kernels.push_back(params.add(name + ".weight", {out, in, 3, 3}, model::kaiming_uniform(rng, out * in * 9, in * 9)));
    stage_biases.push_back(params.add(name + ".bias", {out}, model::constant_values(out, 0.0), true));
    in = out;
  }
  const std::size_t d = config.d_model, c = in;
  global_head = params.add(prefix + "global_head.weight", {d, c}, model::xavier_uniform(rng, d * c, c, d));
  for (std::size_t k = 0; k < data::kRoiCount; ++k) {
    const std::string name = prefix + "roi_head" + std::to_string(k);
    roi_head_weights.push_back(params.add(name + ".weight", {d, c}, model::xavier_uniform(rng, d * c, c, d)));
    roi_head_biases.push_back(params.add(name + ".bias", {d}, model::constant_values(d, 0.0), true));
  }
}

template <typename T>
Tensor<T> VisionStub<T>::encode_image(const Tensor<T>& images) const {
  const bool single = images.rank() == 3;
  if (!single && images.rank() != 4) throw DimensionError("encode_image: expected [3, H, W] or [B, 3, H, W]");
  const std::size_t off = single ? 0 : 1;
  const std::size_t c = images.dim(off), h = images.dim(off + 1), w = images.dim(off + 2);
  if (c != 3 || h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0) {
    throw DimensionError("encode_image: need 3 channels and H, W divisible by 16, got " +
                         numerics::shape_string(images.shape()));
  }
  Tensor<T> x = single ? ops::reshape(images, {1, c, h, w}) : images;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    x = ops::gelu(ops::conv2d(x, stage_kernels[s], stage_biases[s], 2, 1));
  }
  if (single) return ops::reshape(x, {x.dim(1), x.dim(2), x.dim(3)});
  return x;
}

template <typename T>
Tensor<T> VisionStub<T>::pooled(const Tensor<T>& featmap, bool& single) const {
  single = featmap.rank() == 3;
  if (!single && featmap.rank() != 4) throw DimensionError("vision head: featmap must be [C, h, w] or [B, C, h, w]");
  if (featmap.dim(single ? 0 : 1) != feature_channels()) throw DimensionError("vision head: channel mismatch");
  Tensor<T> x = single ? ops::reshape(featmap, {1, featmap.dim(0), featmap.dim(1), featmap.dim(2)}) : featmap;
  return ops::spatial_mean(x);
}

template <typename T>
Tensor<T> VisionStub<T>::global_feature(const Tensor<T>& featmap) const {
  bool single = false;
  auto p = ops::linear(pooled(featmap, single), global_head, Tensor<T>());
  return single ? ops::reshape(p, {config_.d_model}) : p;
}

template <typename T>
Tensor<T> VisionStub<T>::roi_features(const Tensor<T>& featmap) const {
  bool single = false;
  auto pool = pooled(featmap, single);
  const std::size_t batch = pool.dim(0), d = config_.d_model;
  // Stacking the heads gives one [B, 6d] product whose rows split into the six
  // per-head outputs.
  auto weight = ops::concat_rows<T>(roi_head_weights);
  auto bias = ops::reshape(ops::concat_rows<T>(roi_head_biases), {data::kRoiCount * d});
  return ops::reshape(ops::linear(pool, weight, bias), {batch * data::kRoiCount, d});
}

template class VisionStub<float>;
template class VisionStub<double>;

}  // namespace brainformer::vision
