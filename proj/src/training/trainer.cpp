// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/training/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "brainformer/data/dataset_io.hpp"
#include "brainformer/error.hpp"
#include "brainformer/training/optimizer.hpp"

namespace brainformer::training {

std::string format_metrics_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g", r.step, r.l_con, r.l_bfg, r.total, r.sigma, r.lr);
  return buf;
}

std::vector<MetricsRow> parse_metrics(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == kMetricsHeader) continue;
    MetricsRow r;
    if (std::sscanf(line.c_str(), "%zu\t%lf\t%lf\t%lf\t%lf\t%lf", &r.step, &r.l_con, &r.l_bfg, &r.total, &r.sigma,
                    &r.lr) != 6) {
      throw FormatError(0, "bad metrics line: " + line);
    }
    rows.push_back(r);
  }
  return rows;
}

std::size_t total_steps(const TrainConfig& config, std::size_t train_size) {
  if (config.max_steps > 0) return config.max_steps;
  return config.epochs * (train_size / config.batch);
}

TrainResult train(const TrainConfig& config, const data::Dataset& dataset, const TrainOptions& options) {
  validate_config(config);
  const auto train_idx = dataset.indices(data::Split::kTrain);
  if (train_idx.size() < 2 * config.batch) {
    throw ValidationError("train: the train split has " + std::to_string(train_idx.size()) +
                          " samples, need at least 2 * batch = " + std::to_string(2 * config.batch));
  }
  const std::size_t per_epoch = train_idx.size() / config.batch;
  const std::size_t total = total_steps(config, train_idx.size());
  const std::size_t last = options.stop_after > 0 ? std::min(total, options.stop_after) : total;

  TrainResult result;
  Rng init_rng(derive_seed(config.seed, 1));
  result.model = std::make_unique<model::Brainformer<float>>(model_config(config), dataset.roi_layouts, init_rng);
  auto& model = *result.model;
  AdamW<float> optimizer(model.params(),
                         AdamWOptions{config.beta1, config.beta2, config.adam_eps, config.weight_decay});
  Rng shuffle(derive_seed(config.seed, 2));
  std::size_t step = 0;
  if (!options.resume_from.empty()) {
    const Checkpoint ckpt = load_checkpoint(options.resume_from);
    restore_parameters(ckpt, model);
    restore_optimizer(ckpt, optimizer);
    shuffle.set_state(ckpt.rng_state);
    step = ckpt.step;
  }

  std::ofstream metrics;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    const std::string text = to_json(config);
    data::write_file(options.out_dir / "config.json", std::vector<char>(text.begin(), text.end()));
    metrics.open(options.out_dir / "metrics.tsv", std::ios::binary | std::ios::trunc);
    if (!metrics) throw FileNotFoundError("cannot write " + (options.out_dir / "metrics.tsv").string());
    metrics << kMetricsHeader << '\n';
  }

  const bool track_guidance = config.lambda_bfg > 0;
  std::vector<std::size_t> chosen(config.batch);
  std::string epoch_state = shuffle.state();
  // At an epoch boundary the next epoch starts from the current state.
  auto resume_state = [&] { return step % per_epoch == 0 ? shuffle.state() : epoch_state; };
  while (step < last) {
    epoch_state = shuffle.state();
    const auto perm = shuffle.permutation(train_idx.size());
    for (std::size_t j = step % per_epoch; j < per_epoch && step < last; ++j) {
      for (std::size_t t = 0; t < config.batch; ++t) chosen[t] = train_idx[perm[j * config.batch + t]];
      const auto batch = model::make_batch<float>(dataset, chosen);
      model.params().zero_grad();
      const auto out = model.forward(batch);
      const auto terms = model.losses(out, config.lambda_con, config.lambda_bfg, track_guidance);
      terms.total.backward();

      MetricsRow row;
      row.step = step + 1;
      row.l_con = terms.l_con.item();
      row.l_bfg = terms.l_bfg.item();
      row.total = terms.total.item();
      row.sigma = model.temperature().sigma();
      row.lr = cosine_lr(step, total, config.lr);
      optimizer.step(model.params(), row.lr);
      model.temperature().clamp();
      ++step;

      result.metrics.push_back(row);
      if (metrics.is_open()) metrics << format_metrics_row(row) << '\n' << std::flush;
      if (options.on_step) options.on_step(row);
      if (!options.out_dir.empty() && config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
        save_checkpoint(capture_checkpoint(config, model, &optimizer, step, resume_state()),
                        options.out_dir / ("ckpt-" + std::to_string(step) + ".bfck"));
      }
    }
  }
  result.checkpoint = capture_checkpoint(config, model, &optimizer, step, resume_state());
  if (!options.out_dir.empty()) save_checkpoint(result.checkpoint, options.out_dir / "final.bfck");
  return result;
}

}  // namespace brainformer::training
