// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "brainformer/data/generator.hpp"
#include "brainformer/encoder/signal_encoder.hpp"
#include "brainformer/error.hpp"
#include "brainformer/numerics/ops.hpp"
#include "support.hpp"

using namespace brainformer;
using namespace brainformer::encoder;
using brainformer::numerics::Tensor;
using bf_test::max_abs_diff;
using bf_test::values;
using Td = Tensor<double>;

namespace {

struct Fixture {
  model::ParameterSet<double> params;
  Rng rng{17};
  SignalEncoder<double> enc;
  explicit Fixture(EncoderConfig cfg) : enc(cfg, params, rng, "enc.") {
    // Non-zero biases so oracles exercise the affine part.
    for (auto& p : params.entries()) {
      for (auto& v : p.tensor.mutable_data()) {
        if (v == 0.0) v = 0.1 * rng.normal();
      }
    }
  }
};

EncoderConfig config(std::size_t d, std::size_t k, std::size_t s, PositionalMode mode = PositionalMode::kVoxel3d,
                     std::size_t max_tokens = 0) {
  EncoderConfig c;
  c.d_model = d;
  c.kernel = k;
  c.stride = s;
  c.positional = mode;
  c.max_tokens = max_tokens;
  return c;
}

data::RoiLayout random_layout(Rng& rng, std::size_t n) {
  data::RoiLayout layout(n);
  for (auto& c : layout) {
    c.x = static_cast<float>(rng.uniform(-3, 3));
    c.y = static_cast<float>(rng.uniform(-3, 3));
    c.z = static_cast<float>(rng.uniform(-3, 3));
  }
  return layout;
}

// Padded length by direct search: the first length >= max(n, k) that lands on a stride step.
std::size_t search_padded(std::size_t n, std::size_t k, std::size_t s) {
  std::size_t p = std::max(n, k);
  while ((p - k) % s != 0) ++p;
  return p;
}

// Each output token is the window's dot product with each kernel, plus bias.
std::vector<double> conv_oracle(const std::vector<double>& x, const SignalEncoder<double>& enc) {
  const auto& cfg = enc.config();
  const std::size_t np = search_padded(x.size(), cfg.kernel, cfg.stride);
  std::vector<double> padded(np, 0.0);
  std::copy(x.begin(), x.end(), padded.begin());
  const auto w = values(enc.conv_kernels()), b = values(enc.conv_bias());
  std::vector<double> out;
  for (std::size_t t = 0; t + cfg.kernel <= np; t += cfg.stride) {
    for (std::size_t o = 0; o < cfg.d_model; ++o) {
      double s = b[o];
      for (std::size_t j = 0; j < cfg.kernel; ++j) s += padded[t + j] * w[o * cfg.kernel + j];
      out.push_back(s);
    }
  }
  return out;
}

// Mean of the real voxels in each window, then the linear map.
std::vector<double> voxel_oracle(const data::RoiLayout& coords, const SignalEncoder<double>& enc) {
  const auto& cfg = enc.config();
  const std::size_t np = search_padded(coords.size(), cfg.kernel, cfg.stride);
  const auto w = values(enc.voxel_weight()), b = values(enc.voxel_bias());
  std::vector<double> out;
  for (std::size_t t = 0; t + cfg.kernel <= np; t += cfg.stride) {
    double m[3] = {0, 0, 0};
    std::size_t count = 0;
    for (std::size_t i = t; i < std::min(t + cfg.kernel, coords.size()); ++i, ++count) {
      m[0] += coords[i].x;
      m[1] += coords[i].y;
      m[2] += coords[i].z;
    }
    for (double& v : m) v /= static_cast<double>(count);
    for (std::size_t o = 0; o < cfg.d_model; ++o) out.push_back(b[o] + w[o * 3] * m[0] + w[o * 3 + 1] * m[1] + w[o * 3 + 2] * m[2]);
  }
  return out;
}

}  // namespace

TEST_SUITE("lengths") {
  TEST_CASE("512 voxels with kernel 32 and stride 16") {
    CHECK(padded_length(512, 32, 16) == 512);
    CHECK(token_count(512, 32, 16) == 31);
  }

  TEST_CASE("short and ragged signals") {
    CHECK(padded_length(10, 32, 16) == 32);
    CHECK(token_count(10, 32, 16) == 1);
    CHECK(padded_length(65, 32, 16) == 80);
    CHECK(token_count(65, 32, 16) == 4);
  }

  TEST_CASE("matches direct search") {
    for (std::size_t n = 1; n <= 300; ++n)
      for (std::size_t k : {1, 3, 8, 32})
        for (std::size_t s = 1; s <= k; s += 2) CHECK(padded_length(n, k, s) == search_padded(n, k, s));
  }

  TEST_CASE("empty signal or stride longer than kernel") {
    CHECK_THROWS_AS(padded_length(0, 32, 16), UsageError);
    CHECK_THROWS_AS(padded_length(10, 4, 8), UsageError);
  }
}

TEST_SUITE("encode_signal") {
  TEST_CASE("zero signal gives the bias") {
    Fixture f(config(8, 32, 16));
    auto out = f.enc.encode_signal(Td({512}, 0.0));
    REQUIRE(out.shape() == numerics::Shape{31, 8});
    const auto b = values(f.enc.conv_bias());
    for (std::size_t t = 0; t < 31; ++t)
      for (std::size_t o = 0; o < 8; ++o) CHECK(out.data()[t * 8 + o] == b[o]);
  }

  TEST_CASE("random signals match the sliding oracle") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t k = 1 + rng.below(40), s = 1 + rng.below(k), n = 1 + rng.below(128);
      Fixture f(config(1 + rng.below(6), k, s));
      std::vector<double> x(n);
      for (auto& v : x) v = rng.normal();
      const auto got = values(f.enc.encode_signal(Td({n}, x)));
      CHECK(max_abs_diff(got, conv_oracle(x, f.enc)) < 1e-6);
    }
  }

  TEST_CASE("batched rows encode independently") {
    Fixture f(config(4, 8, 4));
    Rng rng(3);
    auto batch = bf_test::random_tensor(rng, {3, 30});
    auto out = f.enc.encode_signal(batch);
    REQUIRE(out.shape() == numerics::Shape{3, token_count(30, 8, 4), 4});
    for (std::size_t b = 0; b < 3; ++b) {
      std::vector<double> row(batch.data().begin() + b * 30, batch.data().begin() + (b + 1) * 30);
      const auto one = values(f.enc.encode_signal(Td({30}, row)));
      std::vector<double> slice(out.data().begin() + b * one.size(), out.data().begin() + (b + 1) * one.size());
      CHECK(slice == one);
    }
  }

  TEST_CASE("a voxel only reaches the windows that contain it") {
    Fixture f(config(4, 8, 4));
    Rng rng(4);
    std::vector<double> x(50);
    for (auto& v : x) v = rng.normal();
    const auto base = values(f.enc.encode_signal(Td({50}, x)));
    for (std::size_t i = 0; i < 50; ++i) {
      auto moved = x;
      moved[i] += 1.0;
      const auto out = values(f.enc.encode_signal(Td({50}, moved)));
      for (std::size_t t = 0; t < out.size() / 4; ++t) {
        const bool inside = i >= t * 4 && i < t * 4 + 8;
        for (std::size_t o = 0; o < 4; ++o) {
          if (!inside) CHECK(out[t * 4 + o] == base[t * 4 + o]);
        }
      }
    }
  }
}

TEST_SUITE("voxel_embed") {
  TEST_CASE("constant coordinates give the same row everywhere") {
    Fixture f(config(5, 8, 4));
    data::RoiLayout layout(37, data::VoxelCoord{0.5f, -1.0f, 2.0f});
    const auto out = values(f.enc.voxel_embed(layout));
    const auto first = std::vector<double>(out.begin(), out.begin() + 5);
    const auto w = values(f.enc.voxel_weight()), b = values(f.enc.voxel_bias());
    for (std::size_t o = 0; o < 5; ++o) {
      CHECK(first[o] == doctest::Approx(b[o] + 0.5 * w[o * 3] - w[o * 3 + 1] + 2.0 * w[o * 3 + 2]).epsilon(1e-12));
    }
    for (std::size_t t = 0; t < out.size() / 5; ++t)
      for (std::size_t o = 0; o < 5; ++o) CHECK(out[t * 5 + o] == doctest::Approx(first[o]).epsilon(1e-12));
  }

  TEST_CASE("one window projects the mean") {
    Fixture f(config(3, 16, 8));
    Rng rng(5);
    const auto layout = random_layout(rng, 16);
    auto out = f.enc.voxel_embed(layout);
    CHECK(out.shape() == numerics::Shape{1, 3});
    CHECK(max_abs_diff(values(out), voxel_oracle(layout, f.enc)) < 1e-9);
  }

  TEST_CASE("window means skip padding") {
    data::RoiLayout layout{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 3, 3}, {4, 0, 0}};
    const auto m = window_coordinate_means(layout, 4, 2);
    // Windows [0, 4) and [2, 6), the second holding voxels 2..4 only.
    REQUIRE(m.size() == 6);
    CHECK(m[0] == 1.5);
    CHECK(m[1] == 0.75);
    CHECK(m[3] == 3.0);
    CHECK(m[4] == 1.0);
  }

  TEST_CASE("random layouts match the brute-force oracle") {
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t k = 1 + rng.below(40), s = 1 + rng.below(k), n = 1 + rng.below(128);
      Fixture f(config(1 + rng.below(6), k, s));
      const auto layout = random_layout(rng, n);
      CHECK(max_abs_diff(values(f.enc.voxel_embed(layout)), voxel_oracle(layout, f.enc)) < 1e-6);
    }
  }

  TEST_CASE("same length as the signal branch") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t k = 1 + rng.below(40), s = 1 + rng.below(k), n = 1 + rng.below(300);
      Fixture f(config(2, k, s));
      const auto layout = random_layout(rng, n);
      CHECK(f.enc.voxel_embed(layout).dim(0) == f.enc.encode_signal(Td({n}, 1.0)).dim(0));
    }
  }
}

TEST_SUITE("positional modes") {
  TEST_CASE("index mode uses the learned table") {
    Fixture f(config(4, 8, 4, PositionalMode::kIndex, 10));
    CHECK(f.params.find("enc.index_embed") != nullptr);
    Rng rng(8);
    const auto layout = random_layout(rng, 20);
    auto pos = f.enc.positional(layout);
    REQUIRE(pos.shape() == numerics::Shape{4, 4});
    const auto table = values(f.params.find("enc.index_embed")->tensor);
    CHECK(values(pos) == std::vector<double>(table.begin(), table.begin() + 16));
    // Coordinates play no part.
    CHECK(bf_test::bitwise_equal(pos, f.enc.positional(random_layout(rng, 20))));
  }

  TEST_CASE("index table too short") {
    Fixture f(config(4, 8, 4, PositionalMode::kIndex, 2));
    Rng rng(9);
    CHECK_THROWS_AS(f.enc.positional(random_layout(rng, 20)), DimensionError);
  }

  TEST_CASE("voxel mode registers no index table") {
    Fixture f(config(4, 8, 4));
    CHECK(f.params.find("enc.index_embed") == nullptr);
  }
}

TEST_SUITE("fuse") {
  TEST_CASE("identity and symmetry") {
    Rng rng(10);
    auto r = bf_test::random_tensor(rng, {5, 3});
    auto v = bf_test::random_tensor(rng, {5, 3});
    CHECK(bf_test::bitwise_equal(fuse(r, Td({5, 3}, 0.0)), r));
    CHECK(bf_test::bitwise_equal(fuse(Td({5, 3}, 0.0), v), v));
    CHECK(bf_test::bitwise_equal(fuse(r, v), fuse(v, r)));
    CHECK_THROWS_AS(fuse(r, Td({3, 5}, 0.0)), DimensionError);
  }

  TEST_CASE("shuffled coordinates change the fused tokens") {
    Fixture f(config(8, 8, 4));
    Rng rng(11);
    const auto layout = random_layout(rng, 64);
    auto shuffled = layout;
    const auto perm = rng.permutation(shuffled.size());
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i] = layout[perm[i]];
    auto x = bf_test::random_tensor(rng, {1, 64});
    CHECK(max_abs_diff(values(f.enc.forward(x, layout)), values(f.enc.forward(x, shuffled))) > 1e-3);
  }

  TEST_CASE("forward tiles positions over the batch") {
    Fixture f(config(4, 8, 4));
    Rng rng(12);
    const auto layout = random_layout(rng, 24);
    auto x = bf_test::random_tensor(rng, {2, 24});
    auto out = f.enc.forward(x, layout);
    const std::size_t l = token_count(24, 8, 4);
    REQUIRE(out.shape() == numerics::Shape{2 * l, 4});
    const auto conv = values(f.enc.encode_signal(x));
    const auto pos = values(f.enc.voxel_embed(layout));
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < l * 4; ++i) CHECK(out.data()[b * l * 4 + i] == conv[b * l * 4 + i] + pos[i]);
  }

  TEST_CASE("generator layouts are spatially ordered within windows") {
    // Consecutive raster voxels are lattice neighbours, so window means move smoothly.
    const auto layout = data::roi_lattice(0, 256);
    const auto m = window_coordinate_means(layout, 32, 16);
    for (std::size_t t = 1; t < m.size() / 3; ++t) CHECK(std::abs(m[t * 3 + 2] - m[(t - 1) * 3 + 2]) < 0.2);
  }
}
