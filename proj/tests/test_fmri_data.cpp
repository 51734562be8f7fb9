// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>

#include "brainformer/data/dataset_io.hpp"
#include "brainformer/data/fmri.hpp"
#include "brainformer/data/generator.hpp"
#include "brainformer/error.hpp"
#include "brainformer/rng.hpp"

using namespace brainformer;
using namespace brainformer::data;

namespace {

GeneratorConfig small_config(double noise = 0.0, std::uint64_t seed = 5) {
  GeneratorConfig c;
  c.n_samples = 24;
  c.roi_sizes = {64, 70, 64, 81, 64, 100};
  c.image_size = 16;
  c.latent_dim = 4;
  c.noise_std = noise;
  c.seed = seed;
  c.test_count = 4;
  return c;
}

std::uint32_t read_u32(const std::vector<char>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[at + static_cast<std::size_t>(i)]);
  return v;
}

bool same_dataset(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < kRoiCount; ++k) {
    if (*a.roi_layouts[k] != *b.roi_layouts[k]) return false;
  }
  for (std::size_t s = 0; s < a.size(); ++s) {
    const auto &x = a.samples[s], &y = b.samples[s];
    if (x.latent != y.latent || x.image.pixels != y.image.pixels) return false;
    for (std::size_t k = 0; k < kRoiCount; ++k) {
      if (x.rois[k].values != y.rois[k].values) return false;
    }
  }
  return a.manifest.splits == b.manifest.splits;
}

// Solves the normal equations of a least-squares fit by Gaussian elimination.
std::vector<double> least_squares(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  const std::size_t p = x.front().size();
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t r = 0; r < x.size(); ++r)
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) a[i][j] += x[r][i] * x[r][j];
      a[i][p] += x[r][i] * y[r];
    }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t j = c; j <= p; ++j) a[r][j] -= f * a[c][j];
    }
  }
  std::vector<double> beta(p);
  for (std::size_t i = 0; i < p; ++i) beta[i] = a[i][p] / a[i][i];
  return beta;
}

}  // namespace

TEST_SUITE("generator") {
  TEST_CASE("default shape contract") {
    GeneratorConfig c;
    c.n_samples = 512;
    c.roi_sizes = {256, 256, 256, 256, 256, 256};
    const auto ds = generate_synthetic(c);
    CHECK(ds.size() == 512);
    for (const auto& s : ds.samples) {
      REQUIRE(s.rois.size() == kRoiCount);
      for (const auto& roi : s.rois) CHECK(roi.values.size() == 256);
    }
    CHECK(validate_dataset(ds).empty());
  }

  TEST_CASE("same seed gives identical data") {
    CHECK(same_dataset(generate_synthetic(small_config()), generate_synthetic(small_config())));
    CHECK(same_dataset(generate_synthetic(small_config(0.1)), generate_synthetic(small_config(0.1))));
    CHECK_FALSE(same_dataset(generate_synthetic(small_config(0.0, 5)), generate_synthetic(small_config(0.0, 6))));
  }

  TEST_CASE("noise-free voxels equal gain times mixed latent") {
    const auto cfg = small_config();
    const auto ds = generate_synthetic(cfg);
    const std::size_t dim = cfg.latent_dim;
    double worst = 0;
    for (std::size_t k = 0; k < kRoiCount; ++k) {
      // Mixing matrix regenerated from its seed stream.
      Rng rng(derive_seed(cfg.seed, 100 + k));
      std::vector<double> w(dim * dim);
      for (auto& v : w) v = rng.normal() / std::sqrt(static_cast<double>(dim));
      const auto& layout = *ds.roi_layouts[k];
      const std::size_t count = layout.size();
      for (const auto& s : ds.samples) {
        for (std::size_t i = 0; i < count; ++i) {
          const std::size_t j = i * dim / count;
          double mixed = 0;
          for (std::size_t c = 0; c < dim; ++c) mixed += w[j * dim + c] * s.latent[c];
          const auto& p = layout[i];
          const double period = 2.0 * (1.0 + 0.25 * static_cast<double>(k));
          const double gain = 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * (p.x + 0.5 * p.y + 0.25 * p.z) / period);
          worst = std::max<double>(worst, std::abs(s.rois[k].values[i] - static_cast<float>(gain * mixed)));
        }
      }
    }
    CHECK(worst == 0.0);
  }

  TEST_CASE("voxels are a linear function of the latent") {
    auto cfg = small_config();
    cfg.n_samples = 200;
    cfg.test_count = 10;
    const auto ds = generate_synthetic(cfg);
    std::vector<std::vector<double>> x;
    for (const auto& s : ds.samples) x.emplace_back(s.latent.begin(), s.latent.end());
    double min_r2 = 1.0;
    for (std::size_t k = 0; k < kRoiCount; ++k) {
      for (std::size_t i = 0; i < cfg.roi_sizes[k]; i += 7) {
        std::vector<double> y;
        for (const auto& s : ds.samples) y.push_back(s.rois[k].values[i]);
        const auto beta = least_squares(x, y);
        double ss_res = 0, ss_tot = 0, mean = 0;
        for (double v : y) mean += v / static_cast<double>(y.size());
        for (std::size_t r = 0; r < y.size(); ++r) {
          double pred = 0;
          for (std::size_t c = 0; c < beta.size(); ++c) pred += beta[c] * x[r][c];
          ss_res += (y[r] - pred) * (y[r] - pred);
          ss_tot += (y[r] - mean) * (y[r] - mean);
        }
        min_r2 = std::min(min_r2, 1.0 - ss_res / ss_tot);
      }
    }
    CHECK(min_r2 > 0.999);
  }

  TEST_CASE("layouts are disjoint lattices") {
    const auto ds = generate_synthetic(small_config());
    for (std::size_t k = 0; k < kRoiCount; ++k) {
      for (const auto& c : *ds.roi_layouts[k]) {
        CHECK(c.x >= static_cast<float>(kRoiOffset * static_cast<double>(k)));
        CHECK(c.x < static_cast<float>(kRoiOffset * static_cast<double>(k) + 1.0));
        CHECK(c.y >= 0.0f);
        CHECK(c.y < 1.0f);
      }
    }
    CHECK(lattice_side(64) == 4);
    CHECK(lattice_side(65) == 5);
    CHECK(lattice_side(1) == 1);
  }

  TEST_CASE("images stay in range and blobs follow the latent") {
    const auto cfg = small_config(0.3);
    const auto model = build_generative_model(cfg);
    const auto ds = generate_synthetic(cfg);
    for (const auto& s : ds.samples) {
      for (float p : s.image.pixels) {
        CHECK(p >= 0.0f);
        CHECK(p <= 1.0f);
      }
      const auto blobs = blobs_for_latent(s.latent, cfg.image_size, model);
      CHECK(blobs.size() == cfg.latent_dim);
      for (const auto& b : blobs) {
        CHECK(b.cx > 0.0);
        CHECK(b.cx < 16.0);
        CHECK(b.sigma > 0.0);
      }
    }
  }

  TEST_CASE("blob mask covers each centre") {
    Blob b;
    b.cx = 4.5;
    b.cy = 2.5;
    b.sigma = 1.0;
    const auto mask = blob_mask({b}, 8, 1.5);
    CHECK(mask[2 * 8 + 4] == 1);
    CHECK(mask[7 * 8 + 0] == 0);
  }

  TEST_CASE("test split is the trailing block") {
    const auto ds = generate_synthetic(small_config());
    const auto test = ds.indices(Split::kTest);
    CHECK(test == std::vector<std::size_t>{20, 21, 22, 23});
    CHECK(ds.indices(Split::kTrain).size() == 20);
  }

  TEST_CASE("invalid sizes") {
    auto c = small_config();
    c.roi_sizes[3] = 63;
    CHECK_THROWS_AS(generate_synthetic(c), UsageError);
    c = small_config();
    c.latent_dim = 1;
    CHECK_THROWS_AS(generate_synthetic(c), UsageError);
    c = small_config();
    c.noise_std = -0.1;
    CHECK_THROWS_AS(generate_synthetic(c), UsageError);
    c = small_config();
    c.image_size = 20;
    CHECK_THROWS_AS(generate_synthetic(c), UsageError);
  }
}

TEST_SUITE("validation") {
  TEST_CASE("generator output is valid") {
    const auto ds = generate_synthetic(small_config(0.2));
    for (const auto& s : ds.samples) CHECK(validate_sample(s).empty());
  }

  TEST_CASE("five regions") {
    auto s = generate_synthetic(small_config()).samples[0];
    s.rois.erase(s.rois.begin() + 2);
    const auto issues = validate_sample(s);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0] == "missing roi_id 2");
  }

  TEST_CASE("NaN voxel names region and index") {
    auto s = generate_synthetic(small_config()).samples[0];
    s.rois[4].values[17] = std::nanf("");
    const auto issues = validate_sample(s);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0] == "roi 4: non-finite value at voxel 17");
  }

  TEST_CASE("pixel out of range and duplicated region") {
    auto s = generate_synthetic(small_config()).samples[0];
    s.image.pixels[3] = 1.5f;
    s.rois[1].roi_id = 0;
    const auto issues = validate_sample(s);
    CHECK(issues.size() == 3);
  }

  TEST_CASE("length mismatch") {
    auto s = generate_synthetic(small_config()).samples[0];
    s.rois[0].values.pop_back();
    CHECK(validate_sample(s).size() == 1);
  }
}

TEST_SUITE("dataset file") {
  TEST_CASE("header layout") {
    const auto bytes = encode_dataset(generate_synthetic(small_config()));
    CHECK(std::memcmp(bytes.data(), "BFMR", 4) == 0);
    CHECK(read_u32(bytes, 4) == 1);
    CHECK(read_u32(bytes, 8) == 24);
    CHECK(read_u32(bytes, 12) == 6);
    CHECK(read_u32(bytes, 16) == 3);
    CHECK(read_u32(bytes, 20) == 16);
    CHECK(read_u32(bytes, 24) == 16);
    CHECK(read_u32(bytes, 28) == 4);
    CHECK(read_u32(bytes, 32) == 64);
    std::size_t voxels = 64 + 70 + 64 + 81 + 64 + 100;
    const std::size_t expected = 32 + 6 * 4 + voxels * 12 + 24 * (4 + 3 * 256 + voxels) * 4;
    CHECK(bytes.size() == expected);
  }

  TEST_CASE("round trip through disk is byte identical") {
    const auto dir = std::filesystem::temp_directory_path() / "bf_test_fmri_data";
    std::filesystem::create_directories(dir);
    auto cfg = small_config(0.05);
    cfg.n_samples = 512;
    cfg.test_count = 64;
    const auto ds = generate_synthetic(cfg);
    save_dataset(ds, dir / "a.bfmr");
    const auto loaded = load_dataset(dir / "a.bfmr");
    CHECK(same_dataset(ds, loaded));
    CHECK(loaded.manifest.seed == cfg.seed);
    CHECK(loaded.manifest.generator_version == kGeneratorVersion);
    save_dataset(loaded, dir / "b.bfmr");
    CHECK(read_file(dir / "a.bfmr") == read_file(dir / "b.bfmr"));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("corrupt magic") {
    auto bytes = encode_dataset(generate_synthetic(small_config()));
    bytes[1] = 'X';
    try {
      (void)decode_dataset(bytes);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 0);
    }
  }

  TEST_CASE("wrong version names its offset") {
    auto bytes = encode_dataset(generate_synthetic(small_config()));
    bytes[4] = 2;
    try {
      (void)decode_dataset(bytes);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 4);
    }
  }

  TEST_CASE("every truncation is rejected") {
    auto cfg = small_config();
    cfg.n_samples = 2;
    cfg.test_count = 1;
    const auto bytes = encode_dataset(generate_synthetic(cfg));
    for (std::size_t cut = 0; cut < bytes.size(); cut += 97) {
      std::vector<char> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
      CHECK_THROWS_AS(decode_dataset(part), FormatError);
    }
    auto longer = bytes;
    longer.push_back(0);
    CHECK_THROWS_AS(decode_dataset(longer), FormatError);
  }

  TEST_CASE("manifest round trip") {
    const auto ds = generate_synthetic(small_config(0.25));
    const auto m = decode_manifest(encode_manifest(ds.manifest));
    CHECK(m.splits == ds.manifest.splits);
    CHECK(m.generator.noise_std == 0.25);
    CHECK(m.generator.roi_sizes == ds.manifest.generator.roi_sizes);
  }

  TEST_CASE("missing file") {
    CHECK_THROWS_AS(load_dataset("/nonexistent/none.bfmr"), FileNotFoundError);
  }
}
