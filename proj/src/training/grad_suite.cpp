// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/training/grad_suite.hpp"

#include <functional>

#include "brainformer/data/generator.hpp"
#include "brainformer/encoder/signal_encoder.hpp"
#include "brainformer/losses/losses.hpp"
#include "brainformer/model/brainformer.hpp"
#include "brainformer/msft/msft.hpp"
#include "brainformer/numerics/ops.hpp"
#include "brainformer/rng.hpp"
#include "brainformer/vision/vision_stub.hpp"

namespace brainformer::training {

namespace ops = numerics;
using Td = numerics::Tensor<double>;

namespace {

Td random_tensor(Rng& rng, numerics::Shape shape, double scale = 1.0) {
  std::vector<double> v(numerics::shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Td(std::move(shape), std::move(v));
}

class Suite {
 public:
  Suite(std::uint64_t seed, double eps) : rng_(derive_seed(seed, 7)), eps_(eps) {}

  Td input(numerics::Shape shape, double scale = 1.0) { return random_tensor(rng_, std::move(shape), scale); }

  /// `build` maps the checked inputs to an output tensor, which is projected
  /// onto fixed random weights so every output entry matters.
  void add(const std::string& name, std::vector<Td> inputs, const std::function<Td(const std::vector<Td>&)>& build) {
    Td probe;
    {
      numerics::NoGradGuard guard;
      probe = build(inputs);
    }
    const Td weights = input(probe.shape());
    auto loss = [&] { return ops::sum(ops::mul(build(inputs), weights)); };
    cases_.push_back({name, numerics::grad_check(loss, inputs, eps_)});
  }

  Rng& rng() { return rng_; }
  std::vector<GradCheckCase> take() { return std::move(cases_); }

 private:
  Rng rng_;
  double eps_;
  std::vector<GradCheckCase> cases_;
};

}  // namespace

std::vector<GradCheckCase> check_ops(std::uint64_t seed, double eps) {
  Suite s(seed, eps);
  using V = std::vector<Td>;
  s.add("add", {s.input({3, 4}), s.input({3, 4})}, [](const V& x) { return ops::add(x[0], x[1]); });
  s.add("sub", {s.input({3, 4}), s.input({3, 4})}, [](const V& x) { return ops::sub(x[0], x[1]); });
  s.add("mul", {s.input({3, 4}), s.input({3, 4})}, [](const V& x) { return ops::mul(x[0], x[1]); });
  s.add("scale", {s.input({5})}, [](const V& x) { return ops::scale(x[0], 1.7); });
  s.add("exp", {s.input({6}, 0.5)}, [](const V& x) { return ops::exp(x[0]); });
  s.add("gelu", {s.input({10})}, [](const V& x) { return ops::gelu(x[0]); });
  s.add("div_scalar", {s.input({2, 3}), Td({1}, std::vector<double>{0.8})},
        [](const V& x) { return ops::div_scalar(x[0], x[1]); });
  s.add("add_row_bias", {s.input({2, 3, 4}), s.input({4})}, [](const V& x) { return ops::add_row_bias(x[0], x[1]); });
  s.add("sum", {s.input({3, 3})}, [](const V& x) { return ops::scale(ops::sum(x[0]), 0.3); });
  s.add("mean", {s.input({3, 3})}, [](const V& x) { return ops::mean(x[0]); });
  s.add("reshape", {s.input({2, 6})}, [](const V& x) { return ops::reshape(x[0], {3, 4}); });
  s.add("transpose", {s.input({2, 5})}, [](const V& x) { return ops::transpose(x[0]); });
  s.add("matmul", {s.input({4, 3}), s.input({3, 5})}, [](const V& x) { return ops::matmul(x[0], x[1]); });
  s.add("batched_matmul_nt", {s.input({6, 4}), s.input({4, 4})},
        [](const V& x) { return ops::batched_matmul_nt(x[0], x[1], 2); });
  s.add("linear", {s.input({2, 3, 4}), s.input({5, 4}), s.input({5})},
        [](const V& x) { return ops::linear(x[0], x[1], x[2]); });
  s.add("softmax", {s.input({3, 5})}, [](const V& x) { return ops::softmax(x[0], 1); });
  s.add("softmax_axis0", {s.input({4, 2})}, [](const V& x) { return ops::softmax(x[0], 0); });
  s.add("cross_entropy", {s.input({4, 5})}, [](const V& x) {
    const std::size_t targets[] = {0, 3, 2, 4};
    return ops::cross_entropy(x[0], targets);
  });
  s.add("layer_norm", {s.input({3, 6}), s.input({6}), s.input({6})},
        [](const V& x) { return ops::layer_norm(x[0], x[1], x[2]); });
  s.add("l2_normalize_rows", {s.input({3, 4})}, [](const V& x) { return ops::l2_normalize_rows(x[0]); });
  s.add("conv1d", {s.input({2, 21, 2}), s.input({3, 2, 5}), s.input({3})},
        [](const V& x) { return ops::conv1d(x[0], x[1], x[2], 3, 1); });
  s.add("conv2d", {s.input({2, 2, 6, 6}), s.input({3, 2, 3, 3}), s.input({3})},
        [](const V& x) { return ops::conv2d(x[0], x[1], x[2], 2, 1); });
  s.add("spatial_mean", {s.input({2, 3, 2, 2})}, [](const V& x) { return ops::spatial_mean(x[0]); });
  s.add("gather_rows", {s.input({4, 3})}, [](const V& x) {
    const std::ptrdiff_t rows[] = {2, numerics::kZeroRow, 0, 2, 3};
    return ops::gather_rows(x[0], rows);
  });
  s.add("concat_rows", {s.input({2, 3}), s.input({1, 3})}, [](const V& x) { return ops::concat_rows<double>(x); });
  s.add("segment_mean", {s.input({6, 3})}, [](const V& x) { return ops::segment_mean(x[0], 2); });
  s.add("masked_segment_mean", {s.input({8, 3})}, [](const V& x) {
    const double mask[] = {1, 0, 1, 1};
    return ops::masked_segment_mean(x[0], 2, std::span<const double>(mask));
  });
  s.add("attention", {s.input({8, 4}), s.input({8, 4}), s.input({8, 4})},
        [](const V& x) { return ops::attention(x[0], x[1], x[2], 2, 2); });
  s.add("attention_masked", {s.input({5, 4}), s.input({5, 4}), s.input({5, 4})}, [](const V& x) {
    const double mask[] = {1, 1, 0, 1, 0};
    return ops::attention(x[0], x[1], x[2], 1, 2, std::span<const double>(mask));
  });

  // Components, checked through their parameters and inputs.
  {
    model::ParameterSet<double> params;
    msft::TransBlock<double> block(8, 2, params, s.rng(), "block.");
    std::vector<Td> inputs{s.input({4, 8})};
    for (auto& e : params.entries()) inputs.push_back(e.tensor);
    s.add("trans_block", inputs, [&](const V& x) { return block.forward(x[0], 1); });
    s.add("trans_block_masked", inputs, [&](const V& x) {
      const double mask[] = {1, 0, 1, 1};
      return block.forward_masked(x[0], mask);
    });
    s.add("cognitive_features", {s.input({6, 8})}, [&](const V& x) {
      auto f = msft::cognitive_features(x[0], block);
      return ops::concat_rows<double>(std::vector<Td>{f.q, f.roi_out});
    });
  }
  {
    model::ParameterSet<double> params;
    msft::MsftStack<double> stack(msft::MsftConfig{4, 2, 2, 2}, 8, params, s.rng(), "msft.");
    std::vector<Td> inputs{s.input({2 * 9, 8})};
    for (auto& e : params.entries()) inputs.push_back(e.tensor);
    s.add("msft_forward", inputs, [&](const V& x) { return stack.forward(x[0], 2); });
  }
  {
    model::ParameterSet<double> params;
    encoder::EncoderConfig cfg{6, 8, 4, encoder::PositionalMode::kVoxel3d, 0};
    encoder::SignalEncoder<double> enc(cfg, params, s.rng(), "enc.");
    data::RoiLayout coords;
    for (int i = 0; i < 19; ++i) coords.push_back({float(i % 3), float(i / 3 % 3), float(i / 9)});
    std::vector<Td> inputs{s.input({2, 19})};
    for (auto& e : params.entries()) inputs.push_back(e.tensor);
    s.add("signal_encoder", inputs, [&](const V& x) { return enc.forward(x[0], coords); });
  }
  {
    model::ParameterSet<double> params;
    vision::VisionStub<double> stub(vision::VisionConfig{{3, 4, 4, 5}, 6}, params, s.rng(), "vision.");
    std::vector<Td> inputs{s.input({1, 3, 16, 16}, 0.5)};
    for (auto& e : params.entries()) inputs.push_back(e.tensor);
    s.add("vision_stub", inputs, [&](const V& x) {
      auto fm = stub.encode_image(x[0]);
      return ops::concat_rows<double>(std::vector<Td>{stub.global_feature(fm), stub.roi_features(fm)});
    });
  }
  s.add("contrastive_loss", {s.input({4, 5}), s.input({4, 5}), Td({1}, std::vector<double>{-0.5})},
        [](const V& x) { return losses::contrastive_loss(x[0], x[1], x[2]); });
  s.add("guidance_loss", {s.input({2, 6, 5}), s.input({2, 6, 5})},
        [](const V& x) { return losses::guidance_loss(x[0], x[1]); });
  s.add("total_loss", {Td({1}, std::vector<double>{1.5}), Td({1}, std::vector<double>{2.5})},
        [](const V& x) { return losses::total_loss(x[0], x[1], 0.3, 0.7); });
  return s.take();
}

numerics::GradCheckReport check_model(std::uint64_t seed, double eps) {
  data::GeneratorConfig gen;
  gen.n_samples = 3;
  gen.roi_sizes = {64, 64, 64, 72, 64, 80};
  gen.image_size = 16;
  gen.latent_dim = 4;
  gen.noise_std = 0.05;
  gen.seed = seed;
  gen.test_count = 1;
  const auto dataset = data::generate_synthetic(gen);

  model::ModelConfig cfg;
  cfg.encoder = encoder::EncoderConfig{8, 8, 4, encoder::PositionalMode::kVoxel3d, 0};
  cfg.msft = msft::MsftConfig{4, 2, 2, 2};
  cfg.vision = vision::VisionConfig{{4, 4, 8, 8}, 8};
  Rng rng(derive_seed(seed, 1));
  model::Brainformer<double> net(cfg, dataset.roi_layouts, rng);
  // Zero biases leave the tiny image features close to the origin, where row
  // normalization is sharply curved and central differences are dominated by
  // truncation error. Checking at a generic point avoids that.
  for (auto& e : net.params().entries()) {
    if (!e.no_decay || e.name == "log_sigma") continue;
    for (auto& v : e.tensor.mutable_data()) v += 0.5 * rng.normal();
  }
  const std::size_t pair[] = {0, 1};
  const auto batch = model::make_batch<double>(dataset, pair);

  std::vector<Td> inputs;
  std::vector<std::string> names;
  for (auto& e : net.params().entries()) {
    inputs.push_back(e.tensor);
    names.push_back(e.name);
  }
  auto loss = [&] { return net.losses(net.forward(batch), 0.5, 0.5).total; };
  return numerics::grad_check(loss, inputs, eps, names);
}

}  // namespace brainformer::training
