// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>

#include "brainformer/data/dataset_io.hpp"
#include "brainformer/data/generator.hpp"
#include "brainformer/error.hpp"
#include "brainformer/training/checkpoint.hpp"
#include "brainformer/training/config.hpp"
#include "brainformer/training/evaluation.hpp"
#include "brainformer/training/grad_suite.hpp"
#include "brainformer/training/trainer.hpp"

namespace brainformer::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kGradTolerance = 1e-4;

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw FileNotFoundError("no such file: " + path.string());
}

struct GenArgs {
  std::string out;
  std::size_t n = 512;
  std::vector<std::size_t> roi_sizes{128};
  std::size_t image_size = 32;
  std::size_t latent_dim = 4;
  double noise_std = 0.05;
  std::size_t test_count = 64;
};

struct TrainArgs {
  std::string data, config, out_dir, resume;
  std::vector<std::string> overrides;
  std::size_t stop_after = 0;
};

struct EvalArgs {
  std::string ckpt, data, task = "retrieval";
};

struct GradArgs {
  std::string scope = "ops";
  double eps = 1e-4;
};

struct AttmapArgs {
  std::string ckpt, data, out;
  std::size_t index = 0;
};

int gen_data(const GenArgs& a, std::uint64_t seed, std::ostream& out) {
  data::GeneratorConfig g;
  g.n_samples = a.n;
  if (a.roi_sizes.size() == 1) {
    g.roi_sizes.fill(a.roi_sizes[0]);
  } else if (a.roi_sizes.size() == data::kRoiCount) {
    std::copy(a.roi_sizes.begin(), a.roi_sizes.end(), g.roi_sizes.begin());
  } else {
    throw ValidationError("--roi-sizes takes one value or six comma-separated values");
  }
  g.image_size = a.image_size;
  g.latent_dim = a.latent_dim;
  g.noise_std = a.noise_std;
  g.seed = seed;
  g.test_count = a.test_count;
  const auto dataset = data::generate_synthetic(g);
  data::save_dataset(dataset, a.out);
  out << "wrote " << a.out << " samples=" << dataset.size() << " test=" << a.test_count << "\n";
  return kExitOk;
}

int train(const TrainArgs& a, std::optional<std::uint64_t> seed, std::ostream& out) {
  require_file(a.data);
  training::TrainConfig config;
  if (!a.config.empty()) {
    require_file(a.config);
    config = training::load_config(a.config);
  }
  for (const auto& o : a.overrides) training::apply_override(config, o);
  if (seed) config.seed = *seed;
  training::validate_config(config);
  const auto dataset = data::load_dataset(a.data);
  training::TrainOptions options;
  options.out_dir = a.out_dir;
  options.stop_after = a.stop_after;
  if (!a.resume.empty()) {
    require_file(a.resume);
    options.resume_from = a.resume;
  }
  const auto result = training::train(config, dataset, options);
  const double last = result.metrics.empty() ? 0.0 : result.metrics.back().total;
  out << "steps=" << result.checkpoint.step << " final_total=" << fixed(last) << " checkpoint="
      << (fs::path(a.out_dir) / "final.bfck").string() << "\n";
  return kExitOk;
}

int eval(const EvalArgs& a, std::ostream& out) {
  require_file(a.ckpt);
  require_file(a.data);
  const auto ckpt = training::load_checkpoint(a.ckpt);
  const auto dataset = data::load_dataset(a.data);
  const auto model = training::model_from_checkpoint(ckpt, dataset);
  if (a.task == "retrieval") {
    const auto r = training::eval_retrieval(*model, dataset);
    out << "top1=" << fixed(r.top1) << " top5=" << fixed(r.top5) << "\n";
  } else {
    const auto r = training::eval_pcc_probe(*model, dataset);
    out << "pcc=" << fixed(r.mean_pcc) << " voxels=" << r.voxels << " excluded=" << r.excluded << "\n";
  }
  return kExitOk;
}

int grad_check(const GradArgs& a, std::uint64_t seed, std::ostream& out) {
  double worst = 0;
  if (a.scope == "ops") {
    for (const auto& c : training::check_ops(seed, a.eps)) {
      out << c.name << " max_rel_error=" << sci(c.report.max_rel_error) << " worst=" << c.report.worst_tensor << "["
          << c.report.worst_index << "] analytic=" << sci(c.report.worst_analytic)
          << " numeric=" << sci(c.report.worst_numeric) << "\n";
      worst = std::max(worst, c.report.max_rel_error);
    }
  } else {
    const auto r = training::check_model(seed, a.eps);
    out << "parameters=" << r.entries << " worst=" << r.worst_tensor << "[" << r.worst_index
        << "] analytic=" << sci(r.worst_analytic) << " numeric=" << sci(r.worst_numeric) << "\n";
    worst = r.max_rel_error;
  }
  out << "max_rel_error=" << sci(worst) << "\n";
  return worst < kGradTolerance ? kExitOk : kExitFailure;
}

int attmap(const AttmapArgs& a, std::ostream& out) {
  require_file(a.ckpt);
  require_file(a.data);
  const auto ckpt = training::load_checkpoint(a.ckpt);
  const auto dataset = data::load_dataset(a.data);
  auto model = training::model_from_checkpoint(ckpt, dataset);
  const auto map = training::attention_map(*model, dataset, a.index);
  training::write_pgm(map, a.out);
  out << "wrote " << a.out << " " << map.width << "x" << map.height << (map.degenerate ? " degenerate=1" : "")
      << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Brainformer fMRI encoder toolkit", "brainformer"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  auto add_seed = [&](CLI::App* cmd) { cmd->add_option("--seed", seed, "random seed"); };

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic paired fMRI/image dataset");
  gen_cmd->add_option("--out", gen.out, "output dataset path")->required();
  gen_cmd->add_option("--n", gen.n, "number of samples");
  gen_cmd->add_option("--roi-sizes", gen.roi_sizes, "voxels per ROI (one value or six)")->delimiter(',');
  gen_cmd->add_option("--image-size", gen.image_size, "image height and width");
  gen_cmd->add_option("--latent-dim", gen.latent_dim, "latent dimension");
  gen_cmd->add_option("--noise-std", gen.noise_std, "noise standard deviation");
  gen_cmd->add_option("--test-count", gen.test_count, "trailing samples tagged as test");
  add_seed(gen_cmd);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--data", tr.data, "dataset path")->required();
  train_cmd->add_option("--config", tr.config, "JSON config file");
  train_cmd->add_option("--out-dir", tr.out_dir, "output directory")->required();
  train_cmd->add_option("--set", tr.overrides, "override a config field, key=value");
  train_cmd->add_option("--resume", tr.resume, "continue from a checkpoint");
  train_cmd->add_option("--stop-after", tr.stop_after, "stop after this many steps, keeping the schedule");
  add_seed(train_cmd);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset's test split");
  eval_cmd->add_option("--ckpt", ev.ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", ev.data, "dataset path")->required();
  eval_cmd->add_option("--task", ev.task, "retrieval or pcc")->check(CLI::IsMember({"retrieval", "pcc"}));
  add_seed(eval_cmd);

  GradArgs gc;
  auto* grad_cmd = app.add_subcommand("grad-check", "compare gradients with central differences");
  grad_cmd->add_option("--scope", gc.scope, "ops or model")->check(CLI::IsMember({"ops", "model"}));
  grad_cmd->add_option("--eps", gc.eps, "finite-difference step");
  add_seed(grad_cmd);

  AttmapArgs am;
  auto* att_cmd = app.add_subcommand("attmap", "write a gradient saliency map as a PGM image");
  att_cmd->add_option("--ckpt", am.ckpt, "checkpoint path")->required();
  att_cmd->add_option("--data", am.data, "dataset path")->required();
  att_cmd->add_option("--index", am.index, "sample index");
  att_cmd->add_option("--out", am.out, "output .pgm path")->required();
  add_seed(att_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }

  try {
    if (gen_cmd->parsed()) return gen_data(gen, seed.value_or(0), out);
    if (train_cmd->parsed()) return train(tr, seed, out);
    if (eval_cmd->parsed()) return eval(ev, out);
    if (grad_cmd->parsed()) return grad_check(gc, seed.value_or(0), out);
    return attmap(am, out);
  } catch (const FileNotFoundError& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissingFile;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const NonFiniteError& e) {
    err << "error: training aborted: " << e.what() << "\n";
    return kExitNonFinite;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace brainformer::cli
