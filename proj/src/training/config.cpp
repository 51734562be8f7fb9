// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/training/config.hpp"

#include <json.hpp>

#include "brainformer/data/dataset_io.hpp"
#include "brainformer/error.hpp"

namespace brainformer::training {

using nlohmann::json;

namespace {

json to_object(const TrainConfig& c) {
  return json{{"d_r", c.d_r},
              {"K", c.K},
              {"conv_stride", c.conv_stride},
              {"w", c.w},
              {"s", c.s},
              {"h", c.h},
              {"n_heads", c.n_heads},
              {"lr", c.lr},
              {"batch", c.batch},
              {"epochs", c.epochs},
              {"lambda_con", c.lambda_con},
              {"lambda_bfg", c.lambda_bfg},
              {"seed", c.seed},
              {"normalize_features", c.normalize_features},
              {"share_roi_blocks", c.share_roi_blocks},
              {"positional_mode", positional_mode_name(c.positional_mode)},
              {"guidance_after_block", c.guidance_after_block},
              {"weight_decay", c.weight_decay},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"max_steps", c.max_steps},
              {"checkpoint_every", c.checkpoint_every}};
}

template <typename V>
void read_number(const json& j, const char* key, V& out) {
  if (!j.is_number()) throw ValidationError(std::string("config: '") + key + "' must be a number");
  if constexpr (std::is_integral_v<V>) {
    if (!j.is_number_unsigned()) {
      throw ValidationError(std::string("config: '") + key + "' must be a non-negative integer");
    }
  }
  out = j.get<V>();
}

void set_field(TrainConfig& c, const std::string& key, const json& v) {
  if (key == "d_r") return read_number(v, "d_r", c.d_r);
  if (key == "K") return read_number(v, "K", c.K);
  if (key == "conv_stride") return read_number(v, "conv_stride", c.conv_stride);
  if (key == "w") return read_number(v, "w", c.w);
  if (key == "s") return read_number(v, "s", c.s);
  if (key == "h") return read_number(v, "h", c.h);
  if (key == "n_heads") return read_number(v, "n_heads", c.n_heads);
  if (key == "lr") return read_number(v, "lr", c.lr);
  if (key == "batch") return read_number(v, "batch", c.batch);
  if (key == "epochs") return read_number(v, "epochs", c.epochs);
  if (key == "lambda_con") return read_number(v, "lambda_con", c.lambda_con);
  if (key == "lambda_bfg") return read_number(v, "lambda_bfg", c.lambda_bfg);
  if (key == "seed") return read_number(v, "seed", c.seed);
  if (key == "weight_decay") return read_number(v, "weight_decay", c.weight_decay);
  if (key == "beta1") return read_number(v, "beta1", c.beta1);
  if (key == "beta2") return read_number(v, "beta2", c.beta2);
  if (key == "adam_eps") return read_number(v, "adam_eps", c.adam_eps);
  if (key == "max_steps") return read_number(v, "max_steps", c.max_steps);
  if (key == "checkpoint_every") return read_number(v, "checkpoint_every", c.checkpoint_every);
  auto flag = [&](bool& out) {
    if (!v.is_boolean()) throw ValidationError("config: '" + key + "' must be true or false");
    out = v.get<bool>();
  };
  if (key == "normalize_features") return flag(c.normalize_features);
  if (key == "share_roi_blocks") return flag(c.share_roi_blocks);
  if (key == "guidance_after_block") return flag(c.guidance_after_block);
  if (key == "positional_mode") {
    if (!v.is_string()) throw ValidationError("config: 'positional_mode' must be a string");
    c.positional_mode = parse_positional_mode(v.get<std::string>());
    return;
  }
  throw ValidationError("config: unknown key '" + key + "'");
}

}  // namespace

std::string positional_mode_name(encoder::PositionalMode mode) {
  return mode == encoder::PositionalMode::kIndex ? "index" : "voxel3d";
}

encoder::PositionalMode parse_positional_mode(const std::string& name) {
  if (name == "voxel3d") return encoder::PositionalMode::kVoxel3d;
  if (name == "index") return encoder::PositionalMode::kIndex;
  throw ValidationError("config: positional_mode must be 'voxel3d' or 'index', got '" + name + "'");
}

std::string to_json(const TrainConfig& config) { return to_object(config).dump(2) + "\n"; }

TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  TrainConfig config;
  for (const auto& [key, value] : j.items()) set_field(config, key, value);
  validate_config(config);
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  const auto bytes = data::read_file(path);
  return config_from_json(std::string(bytes.begin(), bytes.end()));
}

void apply_override(TrainConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;  // bare strings such as positional_mode=index
  }
  set_field(config, key, value);
  validate_config(config);
}

void validate_config(const TrainConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("config: ") + what);
  };
  require(c.d_r > 0, "d_r must be positive");
  require(c.conv_stride >= 1 && c.K >= c.conv_stride, "need K >= conv_stride >= 1");
  require(c.s >= 1 && c.w >= c.s, "need w >= s >= 1");
  require(c.h >= 1, "h must be at least 1");
  require(c.n_heads >= 1 && c.d_r % c.n_heads == 0, "d_r must be divisible by n_heads");
  require(c.lr > 0, "lr must be positive");
  require(c.batch >= 1, "batch must be positive");
  require(c.epochs >= 1 || c.max_steps >= 1, "need epochs or max_steps");
  require(c.lambda_con >= 0 && c.lambda_bfg >= 0, "loss weights must be non-negative");
  require(c.weight_decay >= 0, "weight_decay must be non-negative");
  require(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1, "betas must lie in [0, 1)");
  require(c.adam_eps > 0, "adam_eps must be positive");
}

model::ModelConfig model_config(const TrainConfig& c) {
  model::ModelConfig m;
  m.encoder.d_model = c.d_r;
  m.encoder.kernel = c.K;
  m.encoder.stride = c.conv_stride;
  m.encoder.positional = c.positional_mode;
  m.msft.window = c.w;
  m.msft.step = c.s;
  m.msft.levels = c.h;
  m.msft.heads = c.n_heads;
  m.vision.d_model = c.d_r;
  m.share_roi_blocks = c.share_roi_blocks;
  m.guidance_after_block = c.guidance_after_block;
  m.normalize_features = c.normalize_features;
  return m;
}

}  // namespace brainformer::training
