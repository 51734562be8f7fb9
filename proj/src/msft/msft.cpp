// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/msft/msft.hpp"

#include <algorithm>
#include <map>

#include "brainformer/data/fmri.hpp"
#include "brainformer/error.hpp"
#include "brainformer/numerics/ops.hpp"

namespace brainformer::msft {

namespace ops = numerics;
using numerics::kZeroRow;

std::size_t WindowPlan::real_count(std::size_t i) const {
  const std::size_t b = begin(i);
  return b >= length ? 0 : std::min(width, length - b);
}

WindowPlan window_plan(std::size_t n, std::size_t w, std::size_t s) {
  if (n == 0) throw UsageError("slice_windows: empty sequence");
  if (s == 0 || w < s) throw UsageError("slice_windows: need w >= s >= 1");
  return WindowPlan{n, w, s, (n + s - 1) / s};
}

std::vector<std::size_t> level_lengths(std::size_t n, std::size_t s, std::size_t levels) {
  std::vector<std::size_t> out{n};
  for (std::size_t l = 0; l < levels; ++l) out.push_back((out.back() + s - 1) / s);
  return out;
}

template <typename T>
Windows<T> slice_windows(const Tensor<T>& seq, std::size_t w, std::size_t s) {
  if (seq.rank() != 2) throw DimensionError("slice_windows: sequence must be [N, d]");
  const WindowPlan plan = window_plan(seq.dim(0), w, s);
  std::vector<std::ptrdiff_t> rows(plan.count * w, kZeroRow);
  std::vector<T> mask(plan.count * w, T(0));
  for (std::size_t i = 0; i < plan.count; ++i) {
    for (std::size_t t = 0; t < plan.real_count(i); ++t) {
      rows[i * w + t] = static_cast<std::ptrdiff_t>(plan.begin(i) + t);
      mask[i * w + t] = T(1);
    }
  }
  auto tokens = ops::reshape(ops::gather_rows(seq, rows), {plan.count, w, seq.dim(1)});
  return Windows<T>{tokens, std::move(mask), plan};
}

template <typename T>
Tensor<T> pool_window(const Tensor<T>& tokens, std::span<const T> mask) {
  if (tokens.rank() != 2 || mask.size() != tokens.dim(0)) {
    throw DimensionError("pool_window: tokens must be [w, d] with a length-w mask");
  }
  if (std::none_of(mask.begin(), mask.end(), [](T m) { return m != T(0); })) {
    throw UsageError("pool_window: every position is masked");
  }
  return ops::reshape(ops::masked_segment_mean(tokens, 1, mask), {tokens.dim(1)});
}

template <typename T>
TransBlock<T>::TransBlock(std::size_t d_model, std::size_t heads, model::ParameterSet<T>& params, Rng& rng,
                          const std::string& prefix)
    : d_(d_model), heads_(heads) {
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw UsageError("TransBlock: d_model must be a positive multiple of n_heads");
  }
  const std::size_t d = d_model, hidden = 4 * d_model;
  auto proj = [&](const std::string& name, std::size_t out, std::size_t in) {
    return params.add(prefix + name, {out, in}, model::xavier_uniform(rng, out * in, in, out));
  };
  auto zeros = [&](const std::string& name, std::size_t n) {
    return params.add(prefix + name, {n}, model::constant_values(n, 0.0), true);
  };
  ln1_gamma = params.add(prefix + "ln1.gamma", {d}, model::constant_values(d, 1.0), true);
  ln1_beta = zeros("ln1.beta", d);
  wq = proj("attn.wq", d, d);
  bq = zeros("attn.bq", d);
  wk = proj("attn.wk", d, d);
  wv = proj("attn.wv", d, d);
  bv = zeros("attn.bv", d);
  wo = proj("attn.wo", d, d);
  bo = zeros("attn.bo", d);
  ln2_gamma = params.add(prefix + "ln2.gamma", {d}, model::constant_values(d, 1.0), true);
  ln2_beta = zeros("ln2.beta", d);
  w1 = proj("mlp.w1", hidden, d);
  b1 = zeros("mlp.b1", hidden);
  w2 = proj("mlp.w2", d, hidden);
  b2 = zeros("mlp.b2", d);
}

template <typename T>
Tensor<T> TransBlock<T>::attend(const Tensor<T>& x, std::size_t groups, std::span<const T> mask) const {
  auto n1 = ops::layer_norm(x, ln1_gamma, ln1_beta);
  auto q = ops::linear(n1, wq, bq);
  auto k = ops::linear(n1, wk, Tensor<T>());
  auto v = ops::linear(n1, wv, bv);
  auto h = ops::add(x, ops::linear(ops::attention(q, k, v, groups, heads_, mask), wo, bo));
  auto n2 = ops::layer_norm(h, ln2_gamma, ln2_beta);
  return ops::add(h, ops::linear(ops::gelu(ops::linear(n2, w1, b1)), w2, b2));
}

template <typename T>
Tensor<T> TransBlock<T>::forward(const Tensor<T>& x, std::size_t groups) const {
  if (x.rank() != 2 || x.dim(1) != d_) throw DimensionError("TransBlock: tokens must be [G*T, d]");
  return attend(x, groups, {});
}

template <typename T>
Tensor<T> TransBlock<T>::forward_masked(const Tensor<T>& tokens, std::span<const T> mask) const {
  if (tokens.rank() != 2 || tokens.dim(1) != d_) throw DimensionError("TransBlock: tokens must be [T, d]");
  if (mask.empty()) return attend(tokens, 1, {});
  if (mask.size() != tokens.dim(0)) throw DimensionError("TransBlock: mask length");
  auto out = attend(tokens, 1, mask);
  std::vector<std::ptrdiff_t> keep(mask.size());
  bool padded = false;
  for (std::size_t t = 0; t < mask.size(); ++t) {
    keep[t] = mask[t] != T(0) ? static_cast<std::ptrdiff_t>(t) : kZeroRow;
    padded = padded || mask[t] == T(0);
  }
  return padded ? ops::gather_rows(out, keep) : out;
}

template <typename T>
MsftStack<T>::MsftStack(const MsftConfig& config, std::size_t d_model, model::ParameterSet<T>& params, Rng& rng,
                        const std::string& prefix)
    : config_(config) {
  if (config.levels == 0) throw UsageError("MsftStack: need at least one level");
  window_plan(1, config.window, config.step);
  for (std::size_t l = 0; l < config.levels; ++l) {
    blocks_.emplace_back(d_model, config.heads, params, rng, prefix + "level" + std::to_string(l) + ".");
  }
}

template <typename T>
Tensor<T> MsftStack<T>::forward_single(const Tensor<T>& r) const {
  if (r.rank() != 2) throw DimensionError("msft_forward: sequence must be [N, d]");
  const std::size_t d = r.dim(1);
  Tensor<T> seq = r;
  for (const auto& block : blocks_) {
    auto win = slice_windows(seq, config_.window, config_.step);
    const std::size_t w = config_.window;
    std::vector<Tensor<T>> pooled;
    pooled.reserve(win.plan.count);
    for (std::size_t i = 0; i < win.plan.count; ++i) {
      std::vector<std::ptrdiff_t> rows(w);
      for (std::size_t t = 0; t < w; ++t) rows[t] = static_cast<std::ptrdiff_t>(i * w + t);
      auto tokens = ops::gather_rows(ops::reshape(win.tokens, {win.plan.count * w, d}), rows);
      std::span<const T> mask(win.mask.data() + i * w, w);
      pooled.push_back(ops::reshape(pool_window(block.forward_masked(tokens, mask), mask), {1, d}));
    }
    seq = ops::concat_rows<T>(pooled);
  }
  return ops::reshape(ops::segment_mean(seq, 1), {d});
}

template <typename T>
Tensor<T> MsftStack<T>::forward(const Tensor<T>& r, std::size_t batch, std::vector<std::size_t>* trace) const {
  if (r.rank() != 2 || batch == 0 || r.dim(0) % batch != 0 || r.dim(0) == 0) {
    throw DimensionError("msft_forward: tokens must be [B*N, d] with N >= 1");
  }
  std::size_t n = r.dim(0) / batch;
  if (trace) trace->assign(1, n);
  Tensor<T> seq = r;
  for (const auto& block : blocks_) {
    const WindowPlan plan = window_plan(n, config_.window, config_.step);
    // Windows with the same number of real tokens run as one dense batch.
    std::map<std::size_t, std::vector<std::size_t>> by_count;
    for (std::size_t i = 0; i < plan.count; ++i) by_count[plan.real_count(i)].push_back(i);

    std::vector<Tensor<T>> parts;
    std::vector<std::ptrdiff_t> where(batch * plan.count);  // (b, i) -> row in concatenated parts
    std::size_t offset = 0;
    for (const auto& [count, windows] : by_count) {
      std::vector<std::ptrdiff_t> rows;
      rows.reserve(batch * windows.size() * count);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < windows.size(); ++j) {
          const std::size_t start = b * n + plan.begin(windows[j]);
          for (std::size_t t = 0; t < count; ++t) rows.push_back(static_cast<std::ptrdiff_t>(start + t));
          where[b * plan.count + windows[j]] = static_cast<std::ptrdiff_t>(offset + b * windows.size() + j);
        }
      }
      const std::size_t groups = batch * windows.size();
      parts.push_back(ops::segment_mean(block.forward(ops::gather_rows(seq, rows), groups), groups));
      offset += groups;
    }
    auto stacked = parts.size() == 1 ? parts.front() : ops::concat_rows<T>(parts);
    seq = ops::gather_rows(stacked, where);
    n = plan.count;
    if (trace) trace->push_back(n);
  }
  return ops::segment_mean(seq, batch);
}

template <typename T>
CognitiveFeatures<T> cognitive_features(const Tensor<T>& roi_feats, const TransBlock<T>& final_block,
                                        std::size_t batch) {
  if (roi_feats.rank() != 2 || batch == 0 || roi_feats.dim(0) != data::kRoiCount * batch) {
    throw UsageError("cognitive_features: expected exactly " + std::to_string(data::kRoiCount) +
                     " ROI rows per sample");
  }
  auto roi_out = final_block.forward(roi_feats, batch);
  return CognitiveFeatures<T>{ops::segment_mean(roi_out, batch), roi_out};
}

#define BRAINFORMER_INSTANTIATE_MSFT(T)                                                              \
  template Windows<T> slice_windows(const Tensor<T>&, std::size_t, std::size_t);                     \
  template Tensor<T> pool_window(const Tensor<T>&, std::span<const T>);                               \
  template class TransBlock<T>;                                                                       \
  template class MsftStack<T>;                                                                        \
  template CognitiveFeatures<T> cognitive_features(const Tensor<T>&, const TransBlock<T>&, std::size_t);

BRAINFORMER_INSTANTIATE_MSFT(float)
BRAINFORMER_INSTANTIATE_MSFT(double)

}  // namespace brainformer::msft
