// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/encoder/signal_encoder.hpp"

#include <numeric>

#include "brainformer/error.hpp"
#include "brainformer/numerics/ops.hpp"

namespace brainformer::encoder {

namespace ops = numerics;

std::size_t padded_length(std::size_t n, std::size_t kernel, std::size_t stride) {
  if (n == 0) throw UsageError("encode_signal: empty signal");
  if (kernel == 0 || stride == 0 || stride > kernel) {
    throw UsageError("encode_signal: need kernel >= stride >= 1");
  }
  if (n <= kernel) return kernel;
  const std::size_t over = (n - kernel) % stride;
  return over == 0 ? n : n + (stride - over);
}

std::size_t token_count(std::size_t n, std::size_t kernel, std::size_t stride) {
  return (padded_length(n, kernel, stride) - kernel) / stride + 1;
}

std::vector<double> window_coordinate_means(const data::RoiLayout& coords, std::size_t kernel, std::size_t stride) {
  const std::size_t n = coords.size();
  const std::size_t tokens = token_count(n, kernel, stride);
  std::vector<double> means(tokens * 3, 0.0);
  for (std::size_t t = 0; t < tokens; ++t) {
    const std::size_t begin = t * stride;
    const std::size_t end = std::min(begin + kernel, n);
    double sx = 0, sy = 0, sz = 0;
    for (std::size_t i = begin; i < end; ++i) {
      sx += coords[i].x;
      sy += coords[i].y;
      sz += coords[i].z;
    }
    const double count = static_cast<double>(end - begin);
    means[t * 3 + 0] = sx / count;
    means[t * 3 + 1] = sy / count;
    means[t * 3 + 2] = sz / count;
  }
  return means;
}

template <typename T>
SignalEncoder<T>::SignalEncoder(const EncoderConfig& config, model::ParameterSet<T>& params, Rng& rng,
                                const std::string& prefix)
    : config_(config) {
  const std::size_t d = config.d_model, k = config.kernel;
  if (d == 0) throw UsageError("SignalEncoder: d_model must be positive");
  padded_length(1, k, config.stride);  // validates kernel/stride
  conv_kernels_ = params.add(prefix + "conv.weight", {d, 1, k}, model::kaiming_uniform(rng, d * k, k));
  conv_bias_ = params.add(prefix + "conv.bias", {d}, model::constant_values(d, 0.0), true);
  voxel_weight_ = params.add(prefix + "voxel.weight", {d, 3}, model::xavier_uniform(rng, d * 3, 3, d));
  voxel_bias_ = params.add(prefix + "voxel.bias", {d}, model::constant_values(d, 0.0), true);
  if (config.positional == PositionalMode::kIndex) {
    if (config.max_tokens == 0) throw UsageError("SignalEncoder: index mode needs max_tokens");
    index_table_ = params.add(prefix + "index_embed", {config.max_tokens, d},
                              model::uniform_values(rng, config.max_tokens * d, 0.02));
  }
}

template <typename T>
Tensor<T> SignalEncoder<T>::encode_signal(const Tensor<T>& values) const {
  const bool batched = values.rank() == 2;
  if (!batched && values.rank() != 1) throw DimensionError("encode_signal: values must be [N] or [B, N]");
  const std::size_t batch = batched ? values.dim(0) : 1;
  const std::size_t n = values.dim(batched ? 1 : 0);
  const std::size_t npad = padded_length(n, config_.kernel, config_.stride);

  std::vector<std::ptrdiff_t> rows(batch * npad, numerics::kZeroRow);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i) rows[b * npad + i] = static_cast<std::ptrdiff_t>(b * n + i);
  auto flat = ops::reshape(values, {batch * n, 1});
  auto padded = ops::reshape(ops::gather_rows(flat, rows), {batch, npad, 1});
  auto tokens = ops::conv1d(padded, conv_kernels_, conv_bias_, config_.stride, 0);
  if (!batched) return ops::reshape(tokens, {tokens.dim(1), tokens.dim(2)});
  return tokens;
}

template <typename T>
Tensor<T> SignalEncoder<T>::voxel_embed(const data::RoiLayout& coords) const {
  const auto means = window_coordinate_means(coords, config_.kernel, config_.stride);
  const std::size_t tokens = means.size() / 3;
  Tensor<T> centres({tokens, 3}, std::vector<T>(means.begin(), means.end()));
  return ops::linear(centres, voxel_weight_, voxel_bias_);
}

template <typename T>
Tensor<T> SignalEncoder<T>::index_embed(std::size_t tokens) const {
  if (!index_table_.defined()) throw UsageError("index_embed: encoder is not in index mode");
  if (tokens > config_.max_tokens) throw DimensionError("index_embed: more tokens than table rows");
  std::vector<std::ptrdiff_t> rows(tokens);
  std::iota(rows.begin(), rows.end(), std::ptrdiff_t{0});
  return ops::gather_rows(index_table_, rows);
}

template <typename T>
Tensor<T> SignalEncoder<T>::positional(const data::RoiLayout& coords) const {
  if (config_.positional == PositionalMode::kIndex) {
    return index_embed(token_count(coords.size(), config_.kernel, config_.stride));
  }
  return voxel_embed(coords);
}

template <typename T>
Tensor<T> SignalEncoder<T>::forward(const Tensor<T>& values, const data::RoiLayout& coords) const {
  if (values.rank() != 2 || values.dim(1) != coords.size()) {
    throw DimensionError("SignalEncoder::forward: values must be [B, " + std::to_string(coords.size()) + "]");
  }
  const std::size_t batch = values.dim(0);
  auto tokens = encode_signal(values);
  const std::size_t len = tokens.dim(1), d = tokens.dim(2);
  auto pos = positional(coords);
  // Tile the shared positional tokens over the batch.
  std::vector<std::ptrdiff_t> tile(batch * len);
  for (std::size_t i = 0; i < tile.size(); ++i) tile[i] = static_cast<std::ptrdiff_t>(i % len);
  return fuse(ops::reshape(tokens, {batch * len, d}), ops::gather_rows(pos, tile));
}

template <typename T>
Tensor<T> fuse(const Tensor<T>& signal_tokens, const Tensor<T>& positional_tokens) {
  return ops::add(signal_tokens, positional_tokens);
}

template class SignalEncoder<float>;
template class SignalEncoder<double>;
template Tensor<float> fuse(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> fuse(const Tensor<double>&, const Tensor<double>&);

}  // namespace brainformer::encoder
