// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "brainformer/error.hpp"
#include "brainformer/numerics/grad_check.hpp"
#include "brainformer/numerics/ops.hpp"
#include "support.hpp"

using namespace brainformer;
using namespace brainformer::numerics;
using bf_test::max_abs_diff;
using bf_test::random_tensor;
using bf_test::values;
using Td = Tensor<double>;
using Tf = Tensor<float>;

namespace {

std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                 std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// Sliding dot product with explicit zero padding.
std::vector<double> naive_conv1d(const std::vector<double>& x, std::size_t len, std::size_t cin,
                                 const std::vector<double>& w, std::size_t cout, std::size_t k, std::size_t stride,
                                 std::size_t pad) {
  const std::size_t out_len = (len + 2 * pad - k) / stride + 1;
  std::vector<double> y(out_len * cout, 0.0);
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t o = 0; o < cout; ++o) {
      double s = 0;
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t j = 0; j < k; ++j) {
          const long pos = static_cast<long>(t * stride + j) - static_cast<long>(pad);
          if (pos < 0 || pos >= static_cast<long>(len)) continue;
          s += x[static_cast<std::size_t>(pos) * cin + c] * w[(o * cin + c) * k + j];
        }
      }
      y[t * cout + o] = s;
    }
  }
  return y;
}

std::vector<long double> reference_softmax(const std::vector<double>& x) {
  long double mx = x[0];
  for (double v : x) mx = std::max<long double>(mx, v);
  std::vector<long double> e(x.size());
  long double total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) total += (e[i] = std::exp(static_cast<long double>(x[i]) - mx));
  for (auto& v : e) v /= total;
  return e;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("shape must match value count") {
    CHECK_THROWS_AS(Td({2, 3}, std::vector<double>(5)), DimensionError);
    Td t({2, 3}, 1.5);
    CHECK(t.numel() == shape_numel(t.shape()));
  }

  TEST_CASE("item requires a single value") {
    CHECK(Td::scalar(2.5).item() == 2.5);
    CHECK_THROWS_AS(Td({2}, 0.0).item(), UsageError);
  }

  TEST_CASE("op results cannot be edited in place") {
    auto x = Td::parameter({2}, {1, 2});
    auto y = add(x, x);
    CHECK_THROWS_AS(y.mutable_data(), UsageError);
    CHECK_NOTHROW(x.mutable_data());
  }

  TEST_CASE("non-finite output names the op") {
    Tf big({2}, std::vector<float>{1.0f, 200.0f});
    try {
      (void)numerics::exp(big);
      FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
      CHECK(e.op() == "exp");
    }
    Td zero = Td::scalar(0.0);
    CHECK_THROWS_AS(div_scalar(Td({1}, 1.0), zero), NonFiniteError);
  }

  TEST_CASE("no-grad guard leaves results untracked") {
    auto x = Td::parameter({3}, {1, 2, 3});
    {
      NoGradGuard guard;
      CHECK_FALSE(grad_enabled());
      CHECK_FALSE(sum(x).requires_grad());
    }
    CHECK(grad_enabled());
    CHECK(sum(x).requires_grad());
  }

  TEST_CASE("grad has the same shape as data") {
    auto x = Td::parameter({2, 3}, std::vector<double>(6, 0.5));
    sum(mul(x, x)).backward();
    CHECK(x.grad().size() == x.numel());
  }
}

TEST_SUITE("backward") {
  TEST_CASE("sum gives unit gradients") {
    auto x = Td::parameter({4}, {1, -2, 3, 0.5});
    sum(x).backward();
    for (double g : x.grad()) CHECK(g == 1.0);
  }

  TEST_CASE("sum of squares gives twice the input") {
    auto x = Td::parameter({4}, {1, -2, 3, 0.5});
    sum(mul(x, x)).backward();
    for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == 2.0 * x.data()[i]);
  }

  TEST_CASE("non-scalar loss is rejected") {
    auto x = Td::parameter({2}, {1, 2});
    CHECK_THROWS_AS(scale(x, 2.0).backward(), UsageError);
  }

  TEST_CASE("untracked loss is rejected") {
    Td x({2}, 1.0);
    CHECK_THROWS_AS(sum(x).backward(), UsageError);
  }

  TEST_CASE("leaf gradients accumulate across sweeps") {
    auto x = Td::parameter({2}, {1, 2});
    sum(x).backward();
    sum(x).backward();
    CHECK(x.grad()[0] == 2.0);
  }

  TEST_CASE("shared subexpression receives both contributions") {
    auto x = Td::parameter({3}, {0.5, -1.0, 2.0});
    auto y = numerics::exp(x);
    sum(mul(y, y)).backward();
    for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(2 * std::exp(2 * x.data()[i])));
  }

  TEST_CASE("repeated sweeps give bitwise identical gradients") {
    Rng rng(3);
    auto a = random_tensor(rng, {6, 5});
    auto b = random_tensor(rng, {5, 4});
    a.set_requires_grad(true);
    auto loss = [&] { return sum(gelu(layer_norm(matmul(a, b), Td({4}, 1.0), Td({4}, 0.0)))); };
    loss().backward();
    const auto first = std::vector<double>(a.grad().begin(), a.grad().end());
    a.zero_grad();
    loss().backward();
    CHECK(first == std::vector<double>(a.grad().begin(), a.grad().end()));
  }
}

TEST_SUITE("matmul") {
  TEST_CASE("identity times matrix") {
    Td eye({2, 2}, {1, 0, 0, 1});
    Td m({2, 2}, {1, 2, 3, 4});
    CHECK(values(matmul(eye, m)) == std::vector<double>{1, 2, 3, 4});
  }

  TEST_CASE("row times column") {
    CHECK(matmul(Td({1, 2}, {1, 2}), Td({2, 1}, {3, 4})).item() == 11.0);
  }

  TEST_CASE("random product matches the triple loop") {
    Rng rng(11);
    auto a = random_tensor<float>(rng, {5, 7});
    auto b = random_tensor<float>(rng, {7, 3});
    const auto oracle = naive_matmul(values(a), values(b), 5, 7, 3);
    CHECK(max_abs_diff(values(matmul(a, b)), oracle) < 1e-6);
  }

  TEST_CASE("inner dimension mismatch") {
    CHECK_THROWS_AS(matmul(Td({2, 3}, 1.0), Td({2, 3}, 1.0)), DimensionError);
  }

  TEST_CASE("multiplying by the identity first changes nothing") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 1 + rng.below(6);
      auto a = random_tensor(rng, {m, k});
      auto b = random_tensor(rng, {k, n});
      std::vector<double> eye(k * k, 0.0);
      for (std::size_t i = 0; i < k; ++i) eye[i * k + i] = 1.0;
      auto lhs = matmul(matmul(a, Td({k, k}, eye)), b);
      CHECK(bf_test::bitwise_equal(lhs, matmul(a, b)));
    }
  }

  TEST_CASE("batched products match per-group products") {
    Rng rng(13);
    auto a = random_tensor(rng, {6, 4});
    auto b = random_tensor(rng, {9, 4});
    auto c = batched_matmul_nt(a, b, 3);
    REQUIRE(c.shape() == Shape{6, 3});
    const auto av = values(a), bv = values(b);
    for (std::size_t g = 0; g < 3; ++g)
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
          double s = 0;
          for (std::size_t p = 0; p < 4; ++p) s += av[(g * 2 + i) * 4 + p] * bv[(g * 3 + j) * 4 + p];
          CHECK(c.data()[(g * 2 + i) * 3 + j] == doctest::Approx(s).epsilon(1e-12));
        }
  }
}

TEST_SUITE("softmax") {
  TEST_CASE("uniform logits") {
    for (double v : values(softmax(Td({3}, 0.0), 0))) CHECK(v == doctest::Approx(1.0 / 3.0));
  }

  TEST_CASE("large equal logits do not overflow") {
    auto s = softmax(Tf({2}, std::vector<float>{1000.0f, 1000.0f}), 0);
    CHECK(s.data()[0] == 0.5f);
    CHECK(s.data()[1] == 0.5f);
  }

  TEST_CASE("matches an extended-precision reference") {
    auto s = softmax(Tf({3}, std::vector<float>{1, 2, 3}), 0);
    const auto ref = reference_softmax({1, 2, 3});
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(s.data()[i] - static_cast<double>(ref[i])) < 1e-6);
  }

  TEST_CASE("rows sum to one and ignore a constant shift") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t rows = 1 + rng.below(4), n = 1 + rng.below(9);
      auto x = random_tensor(rng, {rows, n}, 3.0);
      const double c = rng.uniform(-50, 50);
      auto s = softmax(x, 1);
      auto shifted = softmax(add(x, Td({rows, n}, c)), 1);
      for (std::size_t r = 0; r < rows; ++r) {
        double total = 0;
        for (std::size_t j = 0; j < n; ++j) {
          total += s.data()[r * n + j];
          CHECK(std::abs(s.data()[r * n + j] - shifted.data()[r * n + j]) < 1e-6);
          CHECK(s.data()[r * n + j] > 0.0);
        }
        CHECK(std::abs(total - 1.0) < 1e-6);
      }
    }
  }

  TEST_CASE("leading axis") {
    auto s = softmax(Td({2, 2}, {0, 1, 0, 1}), 0);
    CHECK(values(s) == std::vector<double>{0.5, 0.5, 0.5, 0.5});
  }
}

TEST_SUITE("cross_entropy") {
  TEST_CASE("matches minus log softmax at the target") {
    Td logits({2, 3}, {1, 2, 3, 0, 0, 0});
    const std::size_t targets[] = {2, 1};
    const auto p0 = reference_softmax({1, 2, 3});
    const double expected = 0.5 * (-std::log(static_cast<double>(p0[2])) + std::log(3.0));
    CHECK(cross_entropy(logits, targets).item() == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("target outside the row") {
    const std::size_t targets[] = {3};
    CHECK_THROWS_AS(cross_entropy(Td({1, 3}, 0.0), targets), UsageError);
  }
}

TEST_SUITE("layer_norm") {
  const Td ones3({3}, 1.0), zeros3({3}, 0.0);

  TEST_CASE("constant row maps to zero") {
    for (double v : values(layer_norm(Td({3}, 5.0), ones3, zeros3))) CHECK(v == 0.0);
  }

  TEST_CASE("normalization contract") {
    const auto out = values(layer_norm(Td({3}, {1, 2, 3}), ones3, zeros3));
    const double mean = (out[0] + out[1] + out[2]) / 3;
    double var = 0;
    for (double v : out) var += (v - mean) * (v - mean) / 3;
    CHECK(std::abs(mean) < 1e-4);
    CHECK(std::abs(var - 1) < 1e-4);
  }

  TEST_CASE("matches an extended-precision reference") {
    Rng rng(31);
    auto x = random_tensor(rng, {4, 8});
    auto g = random_tensor(rng, {8});
    auto b = random_tensor(rng, {8});
    const auto out = values(layer_norm(x, g, b));
    const auto xv = values(x), gv = values(g), bv = values(b);
    for (std::size_t r = 0; r < 4; ++r) {
      long double mean = 0, var = 0;
      for (std::size_t c = 0; c < 8; ++c) mean += xv[r * 8 + c];
      mean /= 8;
      for (std::size_t c = 0; c < 8; ++c) var += (xv[r * 8 + c] - mean) * (xv[r * 8 + c] - mean);
      var /= 8;
      for (std::size_t c = 0; c < 8; ++c) {
        const long double ref = (xv[r * 8 + c] - mean) / std::sqrt(var + 1e-5L) * gv[c] + bv[c];
        CHECK(std::abs(out[r * 8 + c] - static_cast<double>(ref)) < 1e-6);
      }
    }
  }

  TEST_CASE("pre-affine rows have zero mean and unit variance") {
    Rng rng(32);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t d = 2 + rng.below(30);
      auto x = random_tensor<float>(rng, {3, d}, rng.uniform(0.1, 10));
      const auto out = values(layer_norm(x, Tf({d}, 1.0f), Tf({d}, 0.0f)));
      const auto xv = values(x);
      for (std::size_t r = 0; r < 3; ++r) {
        double xm = 0, xvv = 0, m = 0, v = 0;
        for (std::size_t c = 0; c < d; ++c) xm += xv[r * d + c] / d;
        for (std::size_t c = 0; c < d; ++c) xvv += (xv[r * d + c] - xm) * (xv[r * d + c] - xm) / d;
        if (xvv < 1e-3) continue;
        for (std::size_t c = 0; c < d; ++c) m += out[r * d + c] / d;
        for (std::size_t c = 0; c < d; ++c) v += (out[r * d + c] - m) * (out[r * d + c] - m) / d;
        CHECK(std::abs(m) < 1e-4);
        CHECK(std::abs(v - 1) < 1e-3);
      }
    }
  }
}

TEST_SUITE("gelu") {
  TEST_CASE("zero") { CHECK(gelu(Td({1}, 0.0)).item() == 0.0); }

  TEST_CASE("asymptotes") {
    CHECK(gelu(Td({1}, 10.0)).item() == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(std::abs(gelu(Td({1}, -10.0)).item()) < 1e-20);
  }

  TEST_CASE("one matches the erf formula") {
    const double oracle = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
    CHECK(gelu(Td({1}, 1.0)).item() == doctest::Approx(oracle).epsilon(1e-14));
    CHECK(oracle == doctest::Approx(0.841345).epsilon(1e-6));
  }
}

TEST_SUITE("conv1d") {
  TEST_CASE("output length") {
    CHECK(conv1d_output_length(64, 32, 16, 0) == 3);
    auto y = conv1d(Tf({64, 1}, 1.0f), Tf({1, 1, 32}, 1.0f), Tf(), 16, 0);
    CHECK(y.shape() == Shape{3, 1});
  }

  TEST_CASE("all ones gives the kernel length") {
    auto y = conv1d(Tf({64, 1}, 1.0f), Tf({1, 1, 32}, 1.0f), Tf(), 16, 0);
    for (double v : values(y)) CHECK(v == 32.0);
  }

  TEST_CASE("random signal matches the sliding loop") {
    Rng rng(41);
    auto x = random_tensor<float>(rng, {100, 1});
    auto w = random_tensor<float>(rng, {4, 1, 32});
    const auto oracle = naive_conv1d(values(x), 100, 1, values(w), 4, 32, 16, 0);
    CHECK(max_abs_diff(values(conv1d(x, w, Tf(), 16, 0)), oracle) < 1e-5);
  }

  TEST_CASE("kernel longer than the padded signal") {
    CHECK_THROWS_AS(conv1d(Td({10, 1}, 1.0), Td({1, 1, 13}, 1.0), Td(), 1, 1), DimensionError);
    CHECK_NOTHROW(conv1d(Td({10, 1}, 1.0), Td({1, 1, 12}, 1.0), Td(), 1, 1));
  }

  TEST_CASE("sampled shapes match the sliding loop") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t len = 1 + rng.below(128), cin = 1 + rng.below(3), cout = 1 + rng.below(3);
      const std::size_t pad = rng.below(3), k = 1 + rng.below(len + 2 * pad), stride = 1 + rng.below(8);
      auto x = random_tensor(rng, {len, cin});
      auto w = random_tensor(rng, {cout, cin, k});
      const auto oracle = naive_conv1d(values(x), len, cin, values(w), cout, k, stride, pad);
      CHECK(max_abs_diff(values(conv1d(x, w, Td(), stride, pad)), oracle) < 1e-6);
    }
  }

  TEST_CASE("batched input equals per-sequence calls") {
    Rng rng(43);
    auto x = random_tensor(rng, {3, 40, 2});
    auto w = random_tensor(rng, {5, 2, 7});
    auto bias = random_tensor(rng, {5});
    auto y = conv1d(x, w, bias, 3, 1);
    for (std::size_t b = 0; b < 3; ++b) {
      std::vector<double> one(x.data().begin() + b * 80, x.data().begin() + (b + 1) * 80);
      auto yb = conv1d(Td({40, 2}, one), w, bias, 3, 1);
      std::vector<double> slice(y.data().begin() + b * yb.numel(), y.data().begin() + (b + 1) * yb.numel());
      CHECK(slice == values(yb));
    }
  }
}

TEST_SUITE("conv2d") {
  TEST_CASE("matches a direct loop") {
    Rng rng(51);
    auto x = random_tensor(rng, {2, 3, 6, 5});
    auto w = random_tensor(rng, {4, 3, 3, 3});
    auto bias = random_tensor(rng, {4});
    auto y = conv2d(x, w, bias, 2, 1);
    REQUIRE(y.shape() == Shape{2, 4, 3, 3});
    const auto xv = values(x), wv = values(w), bv = values(bias);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t o = 0; o < 4; ++o)
        for (std::size_t i = 0; i < 3; ++i)
          for (std::size_t j = 0; j < 3; ++j) {
            double s = bv[o];
            for (std::size_t c = 0; c < 3; ++c)
              for (std::size_t di = 0; di < 3; ++di)
                for (std::size_t dj = 0; dj < 3; ++dj) {
                  const long r = static_cast<long>(i * 2 + di) - 1, q = static_cast<long>(j * 2 + dj) - 1;
                  if (r < 0 || r >= 6 || q < 0 || q >= 5) continue;
                  s += xv[((b * 3 + c) * 6 + r) * 5 + q] * wv[((o * 3 + c) * 3 + di) * 3 + dj];
                }
            CHECK(y.data()[((b * 4 + o) * 3 + i) * 3 + j] == doctest::Approx(s).epsilon(1e-12));
          }
  }
}

TEST_SUITE("rows") {
  TEST_CASE("gather with zero rows") {
    Td x({3, 2}, {1, 2, 3, 4, 5, 6});
    const std::ptrdiff_t rows[] = {2, kZeroRow, 0};
    CHECK(values(gather_rows(x, rows)) == std::vector<double>{5, 6, 0, 0, 1, 2});
  }

  TEST_CASE("masked segment mean skips masked rows") {
    Td x({4, 1}, {1, 100, 3, 200});
    const double mask[] = {1, 0};
    CHECK(values(masked_segment_mean(x, 2, std::span<const double>(mask))) == std::vector<double>{1, 3});
    const double none[] = {0, 0};
    CHECK_THROWS_AS(masked_segment_mean(x, 2, std::span<const double>(none)), UsageError);
  }

  TEST_CASE("l2 row normalization") {
    auto n = l2_normalize_rows(Td({2, 2}, {3, 4, 0, 2}));
    CHECK(values(n) == std::vector<double>{0.6, 0.8, 0, 1});
  }
}

TEST_SUITE("attention") {
  TEST_CASE("masked keys are ignored") {
    Rng rng(61);
    auto q = random_tensor(rng, {3, 4});
    auto k = random_tensor(rng, {3, 4});
    auto v = random_tensor(rng, {3, 4});
    const double mask[] = {1, 0, 1};
    auto full = attention(q, k, v, 1, 2, std::span<const double>(mask));
    // Changing a masked key or value changes nothing.
    auto k2 = values(k), v2 = values(v);
    for (std::size_t c = 0; c < 4; ++c) {
      k2[4 + c] += 3.0;
      v2[4 + c] -= 7.0;
    }
    auto moved = attention(q, Td({3, 4}, k2), Td({3, 4}, v2), 1, 2, std::span<const double>(mask));
    CHECK(bf_test::bitwise_equal(full, moved));
  }

  TEST_CASE("one key returns its value") {
    Td q({1, 2}, {0.3, -0.2}), k({1, 2}, {1, 1}), v({1, 2}, {4, 5});
    CHECK(values(attention(q, k, v, 1, 1)) == std::vector<double>{4, 5});
  }

  TEST_CASE("all keys masked") {
    const double mask[] = {0, 0};
    CHECK_THROWS_AS(attention(Td({2, 2}, 1.0), Td({2, 2}, 1.0), Td({2, 2}, 1.0), 1, 1, std::span<const double>(mask)),
                    UsageError);
  }
}

TEST_SUITE("grad_check") {
  TEST_CASE("relative error uses a floored denominator") {
    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(2.0, 1.0) == 0.5);
    CHECK(relative_error(0.0, 1e-10) == doctest::Approx(1e-2));
  }

  TEST_CASE("linear map is exact") {
    Rng rng(71);
    std::vector<Td> inputs{random_tensor(rng, {3, 4}), random_tensor(rng, {2, 4}), random_tensor(rng, {2})};
    auto weights = random_tensor(rng, {3, 2});
    auto loss = [&] { return sum(mul(linear(inputs[0], inputs[1], inputs[2]), weights)); };
    const auto report = grad_check(loss, inputs);
    CHECK(report.entries == 12 + 8 + 2);
    CHECK(report.max_rel_error < 1e-9);
  }

  TEST_CASE("catches a wrong gradient") {
    // x * stop(x) has true gradient 2x but backward only sees one factor.
    auto x = Td::parameter({3}, {1, 2, 3});
    std::vector<Td> inputs{x};
    auto loss = [&] { return sum(mul(inputs[0], inputs[0].detach())); };
    CHECK(grad_check(loss, inputs).max_rel_error > 0.4);
  }

  TEST_CASE("inputs are restored afterwards") {
    Rng rng(72);
    std::vector<Td> inputs{random_tensor(rng, {5})};
    const auto before = values(inputs[0]);
    auto loss = [&] { return sum(gelu(inputs[0])); };
    (void)grad_check(loss, inputs);
    CHECK(values(inputs[0]) == before);
    CHECK_FALSE(inputs[0].requires_grad());
  }
}
