// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/data/dataset_io.hpp"

#include <fstream>
#include <iterator>
#include <json.hpp>

#include "brainformer/binary_io.hpp"
#include "brainformer/error.hpp"

namespace brainformer::data {

using nlohmann::json;

std::vector<char> encode_dataset(const Dataset& ds) {
  if (ds.roi_layouts.size() != kRoiCount) throw UsageError("encode_dataset: expected 6 ROI layouts");
  ByteWriter w;
  w.raw(kDatasetMagic, 4);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.samples.size()));
  w.u32(static_cast<std::uint32_t>(kRoiCount));
  const Image* first = ds.samples.empty() ? nullptr : &ds.samples.front().image;
  w.u32(first ? static_cast<std::uint32_t>(first->channels) : 3);
  w.u32(first ? static_cast<std::uint32_t>(first->height) : 0);
  w.u32(first ? static_cast<std::uint32_t>(first->width) : 0);
  w.u32(static_cast<std::uint32_t>(ds.latent_dim()));
  for (const auto& layout : ds.roi_layouts) {
    w.u32(static_cast<std::uint32_t>(layout->size()));
    for (const auto& c : *layout) {
      w.f32(c.x);
      w.f32(c.y);
      w.f32(c.z);
    }
  }
  for (const auto& s : ds.samples) {
    if (s.latent.size() != ds.latent_dim() || (first && s.image.pixels.size() != first->pixels.size())) {
      throw UsageError("encode_dataset: samples disagree on latent or image size");
    }
    for (const float z : s.latent) w.f32(z);
    for (const float p : s.image.pixels) w.f32(p);
    for (std::size_t k = 0; k < kRoiCount; ++k) {
      const auto& roi = s.rois.at(k);
      if (roi.roi_id != k || roi.values.size() != ds.roi_layouts[k]->size()) {
        throw UsageError("encode_dataset: ROI order or voxel count does not match the layout");
      }
      for (const float v : roi.values) w.f32(v);
    }
  }
  return std::move(w.bytes());
}

Dataset decode_dataset(const std::vector<char>& bytes) {
  ByteReader r(bytes);
  if (r.raw(4, "magic") != std::string(kDatasetMagic, 4)) throw FormatError(0, "bad magic, expected BFMR");
  const std::uint64_t version_at = r.offset();
  if (r.u32("version") != kDatasetVersion) throw FormatError(version_at, "unsupported dataset version");
  const std::uint32_t n_samples = r.u32("n_samples");
  const std::uint64_t rois_at = r.offset();
  if (r.u32("n_rois") != kRoiCount) throw FormatError(rois_at, "n_rois must be 6");
  const std::uint64_t dims_at = r.offset();
  const std::uint32_t c = r.u32("channels"), h = r.u32("height"), wd = r.u32("width");
  if (c != 3) throw FormatError(dims_at, "image must have 3 channels");
  const std::uint32_t latent_dim = r.u32("latent_dim");

  Dataset ds;
  std::uint64_t voxels_per_sample = 0;
  for (std::size_t k = 0; k < kRoiCount; ++k) {
    const std::uint32_t count = r.u32("voxel count");
    r.need(std::uint64_t{count} * 12, "voxel coordinates");
    auto layout = std::make_shared<RoiLayout>(count);
    for (auto& v : *layout) {
      v.x = r.f32("coordinate");
      v.y = r.f32("coordinate");
      v.z = r.f32("coordinate");
    }
    voxels_per_sample += count;
    ds.roi_layouts.push_back(std::move(layout));
  }
  const std::uint64_t pixels = std::uint64_t{c} * h * wd;
  const std::uint64_t per_sample = 4 * (latent_dim + pixels + voxels_per_sample);
  r.need(per_sample * n_samples, "samples");
  ds.samples.reserve(n_samples);
  for (std::uint32_t s = 0; s < n_samples; ++s) {
    FmriSample sample;
    sample.latent.resize(latent_dim);
    for (auto& z : sample.latent) z = r.f32("latent");
    sample.image.channels = c;
    sample.image.height = h;
    sample.image.width = wd;
    sample.image.pixels.resize(pixels);
    for (auto& p : sample.image.pixels) p = r.f32("image");
    for (std::size_t k = 0; k < kRoiCount; ++k) {
      RoiSignal roi;
      roi.roi_id = static_cast<std::uint32_t>(k);
      roi.coords = ds.roi_layouts[k];
      roi.values.resize(ds.roi_layouts[k]->size());
      for (auto& v : roi.values) v = r.f32("voxel value");
      sample.rois.push_back(std::move(roi));
    }
    ds.samples.push_back(std::move(sample));
  }
  if (r.remaining() != 0) throw FormatError(r.offset(), "trailing bytes after last sample");
  ds.manifest.splits.assign(n_samples, Split::kTrain);
  ds.manifest.generator.n_samples = n_samples;
  ds.manifest.generator.latent_dim = latent_dim;
  ds.manifest.generator.image_size = h;
  for (std::size_t k = 0; k < kRoiCount; ++k) ds.manifest.generator.roi_sizes[k] = ds.roi_layouts[k]->size();
  ds.manifest.generator.test_count = 0;
  return ds;
}

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path) {
  std::filesystem::path p = dataset_path;
  p += ".manifest.json";
  return p;
}

std::string encode_manifest(const Manifest& m) {
  json j;
  j["seed"] = m.seed;
  j["generator_version"] = m.generator_version;
  const auto& g = m.generator;
  j["generator"] = {{"n_samples", g.n_samples},   {"roi_sizes", g.roi_sizes}, {"image_size", g.image_size},
                    {"latent_dim", g.latent_dim}, {"noise_std", g.noise_std}, {"seed", g.seed},
                    {"test_count", g.test_count}};
  std::string tags;
  tags.reserve(m.splits.size());
  for (const auto s : m.splits) tags.push_back(s == Split::kTest ? 'T' : 't');
  // One character per sample: 't' train, 'T' test.
  j["splits"] = tags;
  return j.dump(2) + "\n";
}

Manifest decode_manifest(const std::string& text) {
  Manifest m;
  try {
    const json j = json::parse(text);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.generator_version = j.at("generator_version").get<std::string>();
    const auto& g = j.at("generator");
    m.generator.n_samples = g.at("n_samples").get<std::size_t>();
    m.generator.roi_sizes = g.at("roi_sizes").get<std::array<std::size_t, kRoiCount>>();
    m.generator.image_size = g.at("image_size").get<std::size_t>();
    m.generator.latent_dim = g.at("latent_dim").get<std::size_t>();
    m.generator.noise_std = g.at("noise_std").get<double>();
    m.generator.seed = g.at("seed").get<std::uint64_t>();
    m.generator.test_count = g.at("test_count").get<std::size_t>();
    for (const char ch : j.at("splits").get<std::string>()) {
      if (ch != 't' && ch != 'T') throw ValidationError("manifest: unknown split tag");
      m.splits.push_back(ch == 'T' ? Split::kTest : Split::kTrain);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  return m;
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFoundError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file(path, encode_dataset(dataset));
  const std::string text = encode_manifest(dataset.manifest);
  write_file(manifest_path(path), std::vector<char>(text.begin(), text.end()));
}

Dataset load_dataset(const std::filesystem::path& path) {
  Dataset ds = decode_dataset(read_file(path));
  const auto mpath = manifest_path(path);
  if (std::filesystem::exists(mpath)) {
    const auto bytes = read_file(mpath);
    Manifest m = decode_manifest(std::string(bytes.begin(), bytes.end()));
    if (m.splits.size() != ds.samples.size()) {
      throw ValidationError("manifest lists " + std::to_string(m.splits.size()) + " samples, dataset has " +
                            std::to_string(ds.samples.size()));
    }
    ds.manifest = std::move(m);
  }
  return ds;
}

}  // namespace brainformer::data
