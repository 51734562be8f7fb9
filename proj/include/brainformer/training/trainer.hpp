// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "brainformer/data/fmri.hpp"
#include "brainformer/model/brainformer.hpp"
#include "brainformer/training/checkpoint.hpp"
#include "brainformer/training/config.hpp"

namespace brainformer::training {

/// One metrics record; `sigma` is the temperature used by this step's forward pass.
struct MetricsRow {
  std::size_t step = 0;  // 1-based
  double l_con = 0, l_bfg = 0, total = 0, sigma = 0, lr = 0;
};

inline constexpr const char* kMetricsHeader = "step\tl_con\tl_bfg\ttotal\tsigma\tlr";

/// Tab-separated, 9 significant digits, no trailing newline.
std::string format_metrics_row(const MetricsRow& row);
std::vector<MetricsRow> parse_metrics(const std::string& text);

struct TrainOptions {
  /// metrics.tsv, config.json, ckpt-<step>.bfck and final.bfck land here.
  /// Empty: nothing is written.
  std::filesystem::path out_dir;
  /// Continue from this checkpoint instead of a fresh initialization.
  std::filesystem::path resume_from;
  /// When positive, stop once this many steps are done without changing the
  /// schedule (unlike TrainConfig::max_steps).
  std::size_t stop_after = 0;
  std::function<void(const MetricsRow&)> on_step;
};

struct TrainResult {
  std::unique_ptr<model::Brainformer<float>> model;
  Checkpoint checkpoint;  // state after the last step
  std::vector<MetricsRow> metrics;  // rows produced by this call
};

/// Steps in the cosine schedule for this config and train-split size.
std::size_t total_steps(const TrainConfig& config, std::size_t train_size);

/// Minibatch AdamW training on the dataset's train split. NonFiniteError
/// escapes with the name of the first op that produced NaN or Inf.
TrainResult train(const TrainConfig& config, const data::Dataset& dataset, const TrainOptions& options = {});

}  // namespace brainformer::training
