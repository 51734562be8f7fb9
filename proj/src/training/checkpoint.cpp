// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/training/checkpoint.hpp"

#include <algorithm>

#include "brainformer/binary_io.hpp"
#include "brainformer/data/dataset_io.hpp"
#include "brainformer/error.hpp"

namespace brainformer::training {

namespace {

constexpr char kMagic[4] = {'B', 'F', 'C', 'K'};

void write_floats(ByteWriter& out, const std::vector<float>& values) {
  for (const float v : values) out.f32(v);
}

std::vector<float> read_floats(ByteReader& in, std::size_t n, const char* what) {
  in.need(n * 4, what);
  std::vector<float> values(n);
  for (auto& v : values) v = in.f32(what);
  return values;
}

}  // namespace

std::vector<char> encode_checkpoint(const Checkpoint& c) {
  if (c.first_moments.size() != c.params.size() || c.second_moments.size() != c.params.size()) {
    throw UsageError("encode_checkpoint: moment count differs from parameter count");
  }
  ByteWriter out;
  out.raw(kMagic, 4);
  out.u32(kCheckpointVersion);
  out.str(to_json(c.config));
  out.u64(c.step);
  out.u64(c.optimizer_steps);
  out.str(c.rng_state);
  out.u32(static_cast<std::uint32_t>(c.params.size()));
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    const auto& p = c.params[i];
    out.str(p.name);
    out.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (const auto dim : p.shape) out.u32(static_cast<std::uint32_t>(dim));
    if (c.first_moments[i].size() != p.values.size() || c.second_moments[i].size() != p.values.size()) {
      throw UsageError("encode_checkpoint: moment size differs for " + p.name);
    }
    write_floats(out, p.values);
    write_floats(out, c.first_moments[i]);
    write_floats(out, c.second_moments[i]);
  }
  return std::move(out.bytes());
}

Checkpoint decode_checkpoint(const std::vector<char>& bytes) {
  ByteReader in(bytes);
  if (in.raw(4, "magic") != std::string(kMagic, 4)) throw FormatError(0, "not a checkpoint (bad magic)");
  const auto version_offset = in.offset();
  if (const auto version = in.u32("version"); version != kCheckpointVersion) {
    throw FormatError(version_offset, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  const auto config_offset = in.offset();
  try {
    c.config = config_from_json(in.str("config"));
  } catch (const ValidationError& e) {
    throw FormatError(config_offset, std::string("bad config blob: ") + e.what());
  }
  c.step = in.u64("step");
  c.optimizer_steps = in.u64("optimizer step");
  c.rng_state = in.str("rng state");
  const std::uint32_t count = in.u32("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray p;
    p.name = in.str("parameter name");
    const std::uint32_t rank = in.u32("rank");
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      p.shape.push_back(in.u32("dimension"));
      numel *= p.shape.back();
    }
    p.values = read_floats(in, numel, "parameter values");
    c.first_moments.push_back(read_floats(in, numel, "first moments"));
    c.second_moments.push_back(read_floats(in, numel, "second moments"));
    c.params.push_back(std::move(p));
  }
  if (in.remaining() != 0) throw FormatError(in.offset(), "trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  data::write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(data::read_file(path)); }

Checkpoint capture_checkpoint(const TrainConfig& config, const model::Brainformer<float>& model,
                              const AdamW<float>* optimizer, std::uint64_t step, const std::string& rng_state) {
  Checkpoint c;
  c.config = config;
  c.step = step;
  c.rng_state = rng_state;
  c.optimizer_steps = optimizer ? optimizer->steps_taken() : 0;
  const auto& entries = model.params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& t = entries[i].tensor;
    c.params.push_back(NamedArray{entries[i].name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
    if (optimizer) {
      c.first_moments.push_back(optimizer->first_moments()[i]);
      c.second_moments.push_back(optimizer->second_moments()[i]);
    } else {
      c.first_moments.emplace_back(t.numel(), 0.0f);
      c.second_moments.emplace_back(t.numel(), 0.0f);
    }
  }
  return c;
}

void restore_parameters(const Checkpoint& checkpoint, model::Brainformer<float>& model) {
  auto& entries = model.params().entries();
  if (entries.size() != checkpoint.params.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(checkpoint.params.size()) + " parameters, model has " +
                          std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& stored = checkpoint.params[i];
    if (stored.name != entries[i].name || stored.shape != entries[i].tensor.shape()) {
      throw ValidationError("checkpoint parameter '" + stored.name + "' " + numerics::shape_string(stored.shape) +
                            " does not match model parameter '" + entries[i].name + "' " +
                            numerics::shape_string(entries[i].tensor.shape()));
    }
    auto dst = entries[i].tensor.mutable_data();
    std::copy(stored.values.begin(), stored.values.end(), dst.begin());
  }
}

void restore_optimizer(const Checkpoint& checkpoint, AdamW<float>& optimizer) {
  if (optimizer.first_moments().size() != checkpoint.first_moments.size()) {
    throw ValidationError("checkpoint optimizer state does not match the model");
  }
  optimizer.first_moments() = checkpoint.first_moments;
  optimizer.second_moments() = checkpoint.second_moments;
  optimizer.set_steps_taken(checkpoint.optimizer_steps);
}

std::unique_ptr<model::Brainformer<float>> model_from_checkpoint(const Checkpoint& checkpoint,
                                                                 const data::Dataset& dataset) {
  Rng rng(derive_seed(checkpoint.config.seed, 1));
  auto model = std::make_unique<model::Brainformer<float>>(model_config(checkpoint.config), dataset.roi_layouts, rng);
  restore_parameters(checkpoint, *model);
  return model;
}

}  // namespace brainformer::training
