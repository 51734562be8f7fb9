// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "brainformer/error.hpp"
#include "brainformer/numerics/grad_check.hpp"
#include "brainformer/numerics/ops.hpp"
#include "brainformer/vision/vision_stub.hpp"
#include "support.hpp"

using namespace brainformer;
using namespace brainformer::vision;
using brainformer::numerics::Shape;
using brainformer::numerics::Tensor;
using bf_test::max_abs_diff;
using bf_test::random_tensor;
using bf_test::values;
using Td = Tensor<double>;

namespace {

VisionConfig tiny() {
  VisionConfig c;
  c.channels = {3, 4, 5, 6};
  c.d_model = 7;
  return c;
}

struct Fixture {
  model::ParameterSet<double> params;
  Rng rng{23};
  VisionStub<double> stub;
  explicit Fixture(VisionConfig cfg = tiny(), bool random_bias = true) : stub(cfg, params, rng, "v.") {
    if (!random_bias) return;
    for (auto& p : params.entries()) {
      if (!p.no_decay) continue;
      for (auto& v : p.tensor.mutable_data()) v = 0.1 * rng.normal();
    }
  }
};

// 3x3 kernels, stride 2, one pixel of zero padding, then exact GELU.
std::vector<double> stage_oracle(const std::vector<double>& x, std::size_t c_in, std::size_t h, std::size_t w,
                                 const Td& kernel, const Td& bias) {
  const std::size_t c_out = kernel.dim(0), ho = (h + 1) / 2, wo = (w + 1) / 2;
  std::vector<double> y(c_out * ho * wo);
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        double s = bias.data()[o];
        for (std::size_t c = 0; c < c_in; ++c)
          for (std::size_t di = 0; di < 3; ++di)
            for (std::size_t dj = 0; dj < 3; ++dj) {
              const long r = static_cast<long>(2 * i + di) - 1, q = static_cast<long>(2 * j + dj) - 1;
              if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) continue;
              s += x[(c * h + static_cast<std::size_t>(r)) * w + static_cast<std::size_t>(q)] *
                   kernel.data()[((o * c_in + c) * 3 + di) * 3 + dj];
            }
        y[(o * ho + i) * wo + j] = 0.5 * s * (1.0 + std::erf(s / std::sqrt(2.0)));
      }
  return y;
}

std::vector<double> pooled_oracle(const Td& featmap) {
  const std::size_t c = featmap.dim(0), hw = featmap.dim(1) * featmap.dim(2);
  std::vector<double> m(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < hw; ++i) m[k] += featmap.data()[k * hw + i];
    m[k] /= static_cast<double>(hw);
  }
  return m;
}

std::vector<double> project(const Td& w, const Td* b, const std::vector<double>& x) {
  const std::size_t out = w.dim(0), in = w.dim(1);
  std::vector<double> y(out, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    y[o] = b ? b->data()[o] : 0.0;
    for (std::size_t i = 0; i < in; ++i) y[o] += w.data()[o * in + i] * x[i];
  }
  return y;
}

}  // namespace

TEST_SUITE("encode_image") {
  TEST_CASE("32 by 32 image gives a 2 by 2 grid") {
    Fixture f(VisionConfig{}, false);
    Rng rng(1);
    auto img = random_tensor(rng, {3, 32, 32});
    CHECK(f.stub.encode_image(img).shape() == Shape{64, 2, 2});
    CHECK(f.stub.encode_image(random_tensor(rng, {2, 3, 48, 16})).shape() == Shape{2, 64, 3, 1});
  }

  TEST_CASE("zero image with zero biases gives a zero map") {
    Fixture f(VisionConfig{}, false);
    for (double v : values(f.stub.encode_image(Td({3, 32, 32}, 0.0)))) CHECK(v == 0.0);
  }

  TEST_CASE("sides must be multiples of 16") {
    Fixture f;
    CHECK_THROWS_AS(f.stub.encode_image(Td({3, 24, 32}, 0.0)), DimensionError);
    CHECK_THROWS_AS(f.stub.encode_image(Td({1, 32, 32}, 0.0)), DimensionError);
    CHECK_THROWS_AS(f.stub.encode_image(Td({3, 32}, 0.0)), DimensionError);
  }

  TEST_CASE("matches four direct convolution stages") {
    Fixture f;
    Rng rng(2);
    auto img = random_tensor(rng, {3, 32, 16});
    std::vector<double> x = values(img);
    std::size_t c = 3, h = 32, w = 16;
    for (std::size_t s = 0; s < kStageCount; ++s) {
      x = stage_oracle(x, c, h, w, f.stub.stage_kernels[s], f.stub.stage_biases[s]);
      c = f.stub.stage_kernels[s].dim(0);
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
    CHECK(max_abs_diff(values(f.stub.encode_image(img)), x) < 1e-9);
  }

  TEST_CASE("same image twice gives identical features") {
    Fixture f;
    Rng rng(3);
    auto img = random_tensor(rng, {3, 16, 16});
    const auto a = f.stub.encode_image(img), b = f.stub.encode_image(img);
    CHECK(bf_test::bitwise_equal(a, b));
    CHECK(bf_test::bitwise_equal(f.stub.global_feature(a), f.stub.global_feature(b)));
    CHECK(bf_test::bitwise_equal(f.stub.roi_features(a), f.stub.roi_features(b)));
  }
}

TEST_SUITE("heads") {
  TEST_CASE("constant feature map projects the constant") {
    Fixture f;
    Td fm({6, 2, 2}, 0.75);
    auto p = f.stub.global_feature(fm);
    CHECK(p.shape() == Shape{7});
    CHECK(max_abs_diff(values(p), project(f.stub.global_head, nullptr, std::vector<double>(6, 0.75))) < 1e-12);
  }

  TEST_CASE("global feature matches pool then project") {
    Fixture f;
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      auto fm = random_tensor(rng, {6, 1 + rng.below(4), 1 + rng.below(4)});
      CHECK(max_abs_diff(values(f.stub.global_feature(fm)), project(f.stub.global_head, nullptr, pooled_oracle(fm))) <
            1e-6);
    }
  }

  TEST_CASE("roi rows match per-head projections") {
    Fixture f;
    Rng rng(5);
    auto fm = random_tensor(rng, {6, 3, 2});
    auto rows = f.stub.roi_features(fm);
    REQUIRE(rows.shape() == Shape{6, 7});
    const auto pooled = pooled_oracle(fm);
    for (std::size_t k = 0; k < 6; ++k) {
      const auto expect = project(f.stub.roi_head_weights[k], &f.stub.roi_head_biases[k], pooled);
      std::vector<double> got(rows.data().begin() + k * 7, rows.data().begin() + (k + 1) * 7);
      CHECK(max_abs_diff(got, expect) < 1e-6);
    }
  }

  TEST_CASE("zero feature map gives the head biases") {
    Fixture f;
    auto rows = f.stub.roi_features(Td({6, 2, 2}, 0.0));
    for (std::size_t k = 0; k < 6; ++k) {
      std::vector<double> got(rows.data().begin() + k * 7, rows.data().begin() + (k + 1) * 7);
      CHECK(got == values(f.stub.roi_head_biases[k]));
    }
  }

  TEST_CASE("identical heads give identical rows") {
    Fixture f;
    for (std::size_t k = 1; k < 6; ++k) {
      auto w = f.stub.roi_head_weights[k].mutable_data();
      auto b = f.stub.roi_head_biases[k].mutable_data();
      std::copy(f.stub.roi_head_weights[0].data().begin(), f.stub.roi_head_weights[0].data().end(), w.begin());
      std::copy(f.stub.roi_head_biases[0].data().begin(), f.stub.roi_head_biases[0].data().end(), b.begin());
    }
    Rng rng(6);
    auto rows = values(f.stub.roi_features(random_tensor(rng, {6, 2, 2})));
    for (std::size_t k = 1; k < 6; ++k)
      for (std::size_t i = 0; i < 7; ++i) CHECK(rows[k * 7 + i] == rows[i]);
  }

  TEST_CASE("batched features stack per-image features") {
    Fixture f;
    Rng rng(7);
    auto imgs = random_tensor(rng, {2, 3, 16, 16});
    auto fm = f.stub.encode_image(imgs);
    auto p = f.stub.global_feature(fm);
    auto r = f.stub.roi_features(fm);
    CHECK(p.shape() == Shape{2, 7});
    CHECK(r.shape() == Shape{12, 7});
    for (std::size_t b = 0; b < 2; ++b) {
      std::vector<double> one(imgs.data().begin() + b * 768, imgs.data().begin() + (b + 1) * 768);
      auto fm1 = f.stub.encode_image(Td({3, 16, 16}, one));
      const auto p1 = values(f.stub.global_feature(fm1)), r1 = values(f.stub.roi_features(fm1));
      CHECK(max_abs_diff(std::vector<double>(p.data().begin() + b * 7, p.data().begin() + (b + 1) * 7), p1) < 1e-12);
      CHECK(max_abs_diff(std::vector<double>(r.data().begin() + b * 42, r.data().begin() + (b + 1) * 42), r1) < 1e-12);
    }
  }

  TEST_CASE("joint gradient check") {
    Fixture f;
    Rng rng(8);
    std::vector<Td> inputs{random_tensor(rng, {1, 3, 16, 16})};
    for (auto& p : f.params.entries()) inputs.push_back(p.tensor);
    auto wp = random_tensor(rng, {1, 7});
    auto wr = random_tensor(rng, {6, 7});
    auto wf = random_tensor(rng, {1, 6, 1, 1});
    auto loss = [&] {
      auto fm = f.stub.encode_image(inputs[0]);
      auto total = numerics::add(numerics::sum(numerics::mul(f.stub.global_feature(fm), wp)),
                                 numerics::sum(numerics::mul(f.stub.roi_features(fm), wr)));
      return numerics::add(total, numerics::sum(numerics::mul(fm, wf)));
    };
    CHECK(numerics::grad_check(loss, inputs).max_rel_error < 1e-4);
  }
}
