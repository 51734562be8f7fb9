// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "brainformer/error.hpp"
#include "kernels.hpp"

namespace brainformer::numerics {

namespace {

using detail::make_result;
using detail::Node;

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(a.shape()));
  }
}

// Gradient buffer of input `i`, or nullptr when that input is not tracked.
template <typename T>
T* input_grad(Node<T>& self, std::size_t i) {
  Node<T>& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  return in.ensure_grad().data();
}

template <typename T>
const T* input_data(const Node<T>& self, std::size_t i) {
  return self.inputs[i]->data.data();
}

std::size_t row_width(const Shape& shape) { return shape.empty() ? 1 : shape.back(); }

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>("add", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* g = input_grad(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result<T>("sub", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>("mul", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const T* x = input_data(self, 0);
    const T* y = input_data(self, 1);
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (T* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_result<T>("scale", a.shape(), std::move(out), {a}, [factor](Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
  return make_result<T>("exp", a.shape(), std::move(out), {a}, [](Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * self.data[i];
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    out[i] = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  }
  return make_result<T>("gelu", x.shape(), std::move(out), {x}, [](Node<T>& self) {
    constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    const T* in = input_data(self, 0);
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T v = in[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
        g[i] += self.grad[i] * (cdf + v * pdf);
      }
    }
  });
}

template <typename T>
Tensor<T> div_scalar(const Tensor<T>& x, const Tensor<T>& s) {
  if (s.numel() != 1) throw DimensionError("div_scalar: divisor must hold one value, got " + shape_string(s.shape()));
  const T d = s.data()[0];
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] / d;
  return make_result<T>("div_scalar", x.shape(), std::move(out), {x, s}, [](Node<T>& self) {
    const T* xv = input_data(self, 0);
    const T d = input_data(self, 1)[0];
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] / d;
    }
    if (T* g = input_grad(self, 1)) {
      T acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xv[i];
      g[0] -= acc / (d * d);
    }
  });
}

template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t n = row_width(x.shape());
  if (bias.numel() != n) {
    throw DimensionError("add_row_bias: bias " + shape_string(bias.shape()) + " vs rows of " +
                         shape_string(x.shape()));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.data()[i % n];
  return make_result<T>("add_row_bias", x.shape(), std::move(out), {x, bias}, [n](Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and shape

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (const T v : a.data()) acc += v;
  return make_result<T>("sum", Shape{1}, std::vector<T>{acc}, {a}, [](Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      const std::size_t n = self.inputs[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw UsageError("mean: empty tensor");
  T acc = 0;
  for (const T v : a.data()) acc += v;
  const T n = static_cast<T>(a.numel());
  return make_result<T>("mean", Shape{1}, std::vector<T>{acc / n}, {a}, [](Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      const std::size_t n = self.inputs[0]->data.size();
      const T share = self.grad[0] / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) g[i] += share;
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {a}, [](Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank("transpose", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out = kernels::transposed(m, n, a.data().data());
  return make_result<T>("transpose", Shape{n, m}, std::move(out), {a}, [m, n](Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[r * n + c] += self.grad[c * m + r];
    }
  });
}

// ---------------------------------------------------------------------------
// Products

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  kernels::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  return make_result<T>("matmul", Shape{m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    const T* av = input_data(self, 0);
    const T* bv = input_data(self, 1);
    if (T* g = input_grad(self, 0)) kernels::gemm_nt(m, k, n, self.grad.data(), bv, g);
    if (T* g = input_grad(self, 1)) kernels::gemm_tn(k, n, m, av, self.grad.data(), g);
  });
}

template <typename T>
Tensor<T> batched_matmul_nt(const Tensor<T>& a, const Tensor<T>& b, std::size_t groups) {
  require_rank("batched_matmul_nt", a, 2);
  require_rank("batched_matmul_nt", b, 2);
  if (groups == 0 || a.dim(0) % groups != 0 || b.dim(0) % groups != 0 || a.dim(1) != b.dim(1)) {
    throw DimensionError("batched_matmul_nt: incompatible shapes " + shape_string(a.shape()) + ", " +
                         shape_string(b.shape()) + " for " + std::to_string(groups) + " groups");
  }
  const std::size_t m = a.dim(0) / groups, n = b.dim(0) / groups, k = a.dim(1);
  std::vector<T> out(groups * m * n, T(0));
  for (std::size_t g = 0; g < groups; ++g) {
    kernels::gemm_nt(m, n, k, a.data().data() + g * m * k, b.data().data() + g * n * k,
                     out.data() + g * m * n);
  }
  return make_result<T>("batched_matmul_nt", Shape{groups * m, n}, std::move(out), {a, b},
                        [groups, m, n, k](Node<T>& self) {
                          const T* av = input_data(self, 0);
                          const T* bv = input_data(self, 1);
                          T* ga = input_grad(self, 0);
                          T* gb = input_grad(self, 1);
                          for (std::size_t g = 0; g < groups; ++g) {
                            const T* dc = self.grad.data() + g * m * n;
                            if (ga) kernels::gemm_nn(m, k, n, dc, bv + g * n * k, ga + g * m * k);
                            if (gb) kernels::gemm_tn(n, k, m, dc, av + g * m * k, gb + g * n * k);
                          }
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank("linear", weight, 2);
  const std::size_t in = weight.dim(1), outf = weight.dim(0);
  if (x.rank() == 0 || x.shape().back() != in) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != outf) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " vs weight " +
                         shape_string(weight.shape()));
  }
  const std::size_t rows = x.numel() / in;
  std::vector<T> out(rows * outf, T(0));
  if (has_bias) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(bias.data().begin(), bias.data().end(), out.begin() + static_cast<std::ptrdiff_t>(r * outf));
  }
  kernels::gemm_nt(rows, outf, in, x.data().data(), weight.data().data(), out.data());
  Shape shape = x.shape();
  shape.back() = outf;
  std::vector<Tensor<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>("linear", std::move(shape), std::move(out), std::move(inputs),
                        [rows, in, outf, has_bias](Node<T>& self) {
                          const T* xv = input_data(self, 0);
                          const T* wv = input_data(self, 1);
                          const T* dy = self.grad.data();
                          if (T* g = input_grad(self, 0)) kernels::gemm_nn(rows, in, outf, dy, wv, g);
                          if (T* g = input_grad(self, 1)) kernels::gemm_tn(outf, in, rows, dy, xv, g);
                          if (has_bias) {
                            if (T* g = input_grad(self, 2)) {
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t o = 0; o < outf; ++o) g[o] += dy[r * outf + o];
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------
// Normalizations

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("softmax: axis out of range for " + shape_string(x.shape()));
  const std::size_t n = x.dim(axis);
  if (n == 0) throw UsageError("softmax: empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<T> out(x.numel());
  const T* xv = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  return make_result<T>("softmax", x.shape(), std::move(out), {x}, [outer, n, inner](Node<T>& self) {
    T* g = input_grad(self, 0);
    if (!g) return;
    const T* y = self.data.data();
    const T* dy = self.grad.data();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += y[base + j * inner] * dy[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          g[idx] += y[idx] * (dy[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> targets) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t rows = logits.dim(0), n = logits.dim(1);
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  }
  if (rows == 0 || n == 0) throw UsageError("cross_entropy: empty logits");
  // Softmax probabilities are kept for the backward pass.
  std::vector<T> probs(rows * n);
  T total = 0;
  const T* xv = logits.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= n) throw UsageError("cross_entropy: target out of range");
    const T* row = xv + r * n;
    const T mx = *std::max_element(row, row + n);
    T s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[r * n + j] = std::exp(row[j] - mx);
      s += probs[r * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) probs[r * n + j] /= s;
    total += (std::log(s) + mx) - row[targets[r]];
  }
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return make_result<T>("cross_entropy", Shape{1}, std::vector<T>{total / static_cast<T>(rows)}, {logits},
                        [rows, n, probs = std::move(probs), tgt = std::move(tgt)](Node<T>& self) {
                          T* g = input_grad(self, 0);
                          if (!g) return;
                          const T share = self.grad[0] / static_cast<T>(rows);
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t j = 0; j < n; ++j) g[r * n + j] += share * probs[r * n + j];
                            g[r * n + tgt[r]] -= share;
                          }
                        });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: affine parameters do not match width " + std::to_string(d));
  }
  if (!(eps > T(0))) throw UsageError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(rows);
  const T* xv = x.data().data();
  const T* gv = gamma.data().data();
  const T* bv = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * rstd[r];
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_result<T>("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                        [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
                          const T* gv = input_data(self, 1);
                          const T* dy = self.grad.data();
                          if (T* g = input_grad(self, 0)) {
                            for (std::size_t r = 0; r < rows; ++r) {
                              T mean_dh = 0, mean_dh_h = 0;
                              for (std::size_t j = 0; j < d; ++j) {
                                const T dh = dy[r * d + j] * gv[j];
                                mean_dh += dh;
                                mean_dh_h += dh * xhat[r * d + j];
                              }
                              mean_dh /= static_cast<T>(d);
                              mean_dh_h /= static_cast<T>(d);
                              for (std::size_t j = 0; j < d; ++j) {
                                const T dh = dy[r * d + j] * gv[j];
                                g[r * d + j] += rstd[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
                              }
                            }
                          }
                          if (T* g = input_grad(self, 1)) {
                            for (std::size_t i = 0; i < rows * d; ++i) g[i % d] += dy[i] * xhat[i];
                          }
                          if (T* g = input_grad(self, 2)) {
                            for (std::size_t i = 0; i < rows * d; ++i) g[i % d] += dy[i];
                          }
                        });
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps) {
  if (x.rank() == 0) throw DimensionError("l2_normalize_rows: scalar input");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  std::vector<T> out(x.numel());
  std::vector<T> norms(rows);
  const T* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T ss = 0;
    for (std::size_t j = 0; j < d; ++j) ss += xv[r * d + j] * xv[r * d + j];
    norms[r] = std::max(std::sqrt(ss), eps);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] / norms[r];
  }
  return make_result<T>("l2_normalize_rows", x.shape(), std::move(out), {x},
                        [rows, d, eps, norms = std::move(norms)](Node<T>& self) {
                          T* g = input_grad(self, 0);
                          if (!g) return;
                          const T* y = self.data.data();
                          const T* dy = self.grad.data();
                          for (std::size_t r = 0; r < rows; ++r) {
                            if (norms[r] <= eps) {
                              for (std::size_t j = 0; j < d; ++j) g[r * d + j] += dy[r * d + j] / eps;
                              continue;
                            }
                            T dot = 0;
                            for (std::size_t j = 0; j < d; ++j) dot += y[r * d + j] * dy[r * d + j];
                            for (std::size_t j = 0; j < d; ++j)
                              g[r * d + j] += (dy[r * d + j] - y[r * d + j] * dot) / norms[r];
                          }
                        });
}

// ---------------------------------------------------------------------------
// Convolutions

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                 std::size_t zero_pad) {
  if (stride == 0) throw UsageError("conv1d: stride must be positive");
  if (kernel == 0 || kernel > length + 2 * zero_pad) {
    throw DimensionError("conv1d: kernel of length " + std::to_string(kernel) +
                         " does not fit a padded signal of length " + std::to_string(length + 2 * zero_pad));
  }
  return (length + 2 * zero_pad - kernel) / stride + 1;
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& signal, const Tensor<T>& kernels, const Tensor<T>& bias,
                 std::size_t stride, std::size_t zero_pad) {
  require_rank("conv1d", kernels, 3);
  const bool batched = signal.rank() == 3;
  if (!batched && signal.rank() != 2) {
    throw DimensionError("conv1d: signal must be [L, C_in] or [B, L, C_in], got " + shape_string(signal.shape()));
  }
  const std::size_t batch = batched ? signal.dim(0) : 1;
  const std::size_t length = signal.dim(batched ? 1 : 0);
  const std::size_t cin = signal.dim(batched ? 2 : 1);
  const std::size_t cout = kernels.dim(0), ksize = kernels.dim(2);
  if (kernels.dim(1) != cin) {
    throw DimensionError("conv1d: kernels " + shape_string(kernels.shape()) + " expect " +
                         std::to_string(kernels.dim(1)) + " input channels, signal has " + std::to_string(cin));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != cout) throw DimensionError("conv1d: bias does not match output channels");
  const std::size_t lout = conv1d_output_length(length, ksize, stride, zero_pad);
  const std::size_t rows = batch * lout, patch = cin * ksize;

  // Patch matrix [rows, cin*K], laid out to match kernels[o][c][k].
  std::vector<T> cols(rows * patch, T(0));
  const T* sv = signal.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < lout; ++t) {
      T* dst = cols.data() + (b * lout + t) * patch;
      for (std::size_t k = 0; k < ksize; ++k) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(zero_pad);
        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(length)) continue;
        for (std::size_t c = 0; c < cin; ++c) dst[c * ksize + k] = sv[(b * length + static_cast<std::size_t>(pos)) * cin + c];
      }
    }
  }
  std::vector<T> out(rows * cout, T(0));
  if (has_bias) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < cout; ++o) out[r * cout + o] = bias.data()[o];
  }
  kernels::gemm_nt(rows, cout, patch, cols.data(), kernels.data().data(), out.data());

  Shape shape = batched ? Shape{batch, lout, cout} : Shape{lout, cout};
  std::vector<Tensor<T>> inputs{signal, kernels};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(
      "conv1d", std::move(shape), std::move(out), std::move(inputs),
      [=, cols = std::move(cols)](Node<T>& self) {
        const T* dy = self.grad.data();
        if (T* g = input_grad(self, 1)) kernels::gemm_tn(cout, patch, rows, dy, cols.data(), g);
        if (has_bias) {
          if (T* g = input_grad(self, 2)) {
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t o = 0; o < cout; ++o) g[o] += dy[r * cout + o];
          }
        }
        if (T* g = input_grad(self, 0)) {
          std::vector<T> dcols(rows * patch, T(0));
          kernels::gemm_nn(rows, patch, cout, dy, input_data(self, 1), dcols.data());
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < lout; ++t) {
              const T* src = dcols.data() + (b * lout + t) * patch;
              for (std::size_t k = 0; k < ksize; ++k) {
                const std::ptrdiff_t pos =
                    static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(zero_pad);
                if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(length)) continue;
                for (std::size_t c = 0; c < cin; ++c)
                  g[(b * length + static_cast<std::size_t>(pos)) * cin + c] += src[c * ksize + k];
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias, std::size_t stride,
                 std::size_t zero_pad) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", kernels, 4);
  const std::size_t batch = x.dim(0), cin = x.dim(1), height = x.dim(2), width = x.dim(3);
  const std::size_t cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != cin) throw DimensionError("conv2d: channel mismatch between input and kernels");
  if (stride == 0) throw UsageError("conv2d: stride must be positive");
  if (kh > height + 2 * zero_pad || kw > width + 2 * zero_pad) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != cout) throw DimensionError("conv2d: bias does not match output channels");
  const std::size_t ho = (height + 2 * zero_pad - kh) / stride + 1;
  const std::size_t wo = (width + 2 * zero_pad - kw) / stride + 1;
  const std::size_t rows = batch * ho * wo, patch = cin * kh * kw;
  const auto pad = static_cast<std::ptrdiff_t>(zero_pad);

  std::vector<T> cols(rows * patch, T(0));
  const T* xv = x.data().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        T* dst = cols.data() + ((b * ho + oy) * wo + ox) * patch;
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
              dst[(c * kh + ky) * kw + kx] =
                  xv[((b * cin + c) * height + static_cast<std::size_t>(iy)) * width + static_cast<std::size_t>(ix)];
            }
          }
      }
  std::vector<T> rows_out(rows * cout, T(0));
  kernels::gemm_nt(rows, cout, patch, cols.data(), kernels.data().data(), rows_out.data());
  std::vector<T> out(batch * cout * ho * wo);
  const std::size_t plane = ho * wo;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t o = 0; o < cout; ++o)
        out[(b * cout + o) * plane + p] = rows_out[(b * plane + p) * cout + o] + (has_bias ? bias.data()[o] : T(0));

  std::vector<Tensor<T>> inputs{x, kernels};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(
      "conv2d", Shape{batch, cout, ho, wo}, std::move(out), std::move(inputs),
      [=, cols = std::move(cols)](Node<T>& self) {
        std::vector<T> drows(rows * cout);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t p = 0; p < plane; ++p)
            for (std::size_t o = 0; o < cout; ++o)
              drows[(b * plane + p) * cout + o] = self.grad[(b * cout + o) * plane + p];
        if (T* g = input_grad(self, 1)) kernels::gemm_tn(cout, patch, rows, drows.data(), cols.data(), g);
        if (has_bias) {
          if (T* g = input_grad(self, 2)) {
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t o = 0; o < cout; ++o) g[o] += drows[r * cout + o];
          }
        }
        if (T* g = input_grad(self, 0)) {
          std::vector<T> dcols(rows * patch, T(0));
          kernels::gemm_nn(rows, patch, cout, drows.data(), input_data(self, 1), dcols.data());
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t oy = 0; oy < ho; ++oy)
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const T* src = dcols.data() + ((b * ho + oy) * wo + ox) * patch;
                for (std::size_t c = 0; c < cin; ++c)
                  for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                      const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
                      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
                      g[((b * cin + c) * height + static_cast<std::size_t>(iy)) * width + static_cast<std::size_t>(ix)] +=
                          src[(c * kh + ky) * kw + kx];
                    }
                  }
              }
        }
      });
}

template <typename T>
Tensor<T> spatial_mean(const Tensor<T>& x) {
  require_rank("spatial_mean", x, 4);
  const std::size_t bc = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<T> out(bc);
  for (std::size_t i = 0; i < bc; ++i) {
    T acc = 0;
    for (std::size_t p = 0; p < plane; ++p) acc += x.data()[i * plane + p];
    out[i] = acc / static_cast<T>(plane);
  }
  return make_result<T>("spatial_mean", Shape{x.dim(0), x.dim(1)}, std::move(out), {x},
                        [bc, plane](Node<T>& self) {
                          T* g = input_grad(self, 0);
                          if (!g) return;
                          for (std::size_t i = 0; i < bc; ++i) {
                            const T share = self.grad[i] / static_cast<T>(plane);
                            for (std::size_t p = 0; p < plane; ++p) g[i * plane + p] += share;
                          }
                        });
}

// ---------------------------------------------------------------------------
// Row selection and pooling

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::ptrdiff_t> rows) {
  if (x.rank() == 0) throw DimensionError("gather_rows: scalar input");
  const std::size_t nrows = x.dim(0);
  const std::size_t width = nrows == 0 ? 0 : x.numel() / nrows;
  std::vector<T> out(rows.size() * width, T(0));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] == kZeroRow) continue;
    if (rows[r] < 0 || static_cast<std::size_t>(rows[r]) >= nrows) {
      throw DimensionError("gather_rows: row index " + std::to_string(rows[r]) + " out of range for " +
                           shape_string(x.shape()));
    }
    std::copy_n(x.data().begin() + rows[r] * static_cast<std::ptrdiff_t>(width), width,
                out.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  Shape shape = x.shape();
  shape[0] = rows.size();
  std::vector<std::ptrdiff_t> idx(rows.begin(), rows.end());
  return make_result<T>("gather_rows", std::move(shape), std::move(out), {x},
                        [width, idx = std::move(idx)](Node<T>& self) {
                          T* g = input_grad(self, 0);
                          if (!g) return;
                          for (std::size_t r = 0; r < idx.size(); ++r) {
                            if (idx[r] == kZeroRow) continue;
                            T* dst = g + static_cast<std::size_t>(idx[r]) * width;
                            const T* src = self.grad.data() + r * width;
                            for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
                          }
                        });
}

template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw UsageError("concat_rows: nothing to concatenate");
  Shape trailing(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t total_rows = 0;
  std::vector<T> out;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    if (p.rank() == 0 || Shape(p.shape().begin() + 1, p.shape().end()) != trailing) {
      throw DimensionError("concat_rows: trailing extents differ, " + shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    total_rows += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
    sizes.push_back(p.numel());
  }
  Shape shape{total_rows};
  shape.insert(shape.end(), trailing.begin(), trailing.end());
  return make_result<T>("concat_rows", std::move(shape), std::move(out),
                        std::vector<Tensor<T>>(parts.begin(), parts.end()),
                        [sizes = std::move(sizes)](Node<T>& self) {
                          std::size_t offset = 0;
                          for (std::size_t i = 0; i < sizes.size(); ++i) {
                            if (T* g = input_grad(self, i)) {
                              for (std::size_t j = 0; j < sizes[i]; ++j) g[j] += self.grad[offset + j];
                            }
                            offset += sizes[i];
                          }
                        });
}

namespace {

// Shared by segment_mean and masked_segment_mean so that a compact window and
// the same window carrying masked padding reduce in exactly the same order.
template <typename T>
Tensor<T> masked_mean_impl(const char* op, const Tensor<T>& x, std::size_t groups, std::vector<T> mask) {
  require_rank(op, x, 2);
  if (groups == 0 || x.dim(0) % groups != 0) {
    throw DimensionError(std::string(op) + ": " + std::to_string(x.dim(0)) + " rows do not split into " +
                         std::to_string(groups) + " groups");
  }
  const std::size_t per = x.dim(0) / groups, width = x.dim(1);
  if (mask.empty()) mask.assign(per, T(1));
  if (mask.size() != per) throw DimensionError(std::string(op) + ": mask length does not match group size");
  std::size_t count = 0;
  for (const T m : mask) count += (m != T(0)) ? 1 : 0;
  if (count == 0) throw UsageError(std::string(op) + ": every position is masked");
  const T denom = static_cast<T>(count);
  std::vector<T> out(groups * width, T(0));
  const T* xv = x.data().data();
  for (std::size_t g = 0; g < groups; ++g) {
    T* dst = out.data() + g * width;
    for (std::size_t t = 0; t < per; ++t) {
      if (mask[t] == T(0)) continue;
      const T* src = xv + (g * per + t) * width;
      for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
    }
    for (std::size_t j = 0; j < width; ++j) dst[j] /= denom;
  }
  return make_result<T>(op, Shape{groups, width}, std::move(out), {x},
                        [groups, per, width, denom, mask = std::move(mask)](Node<T>& self) {
                          T* g = input_grad(self, 0);
                          if (!g) return;
                          for (std::size_t gr = 0; gr < groups; ++gr) {
                            const T* src = self.grad.data() + gr * width;
                            for (std::size_t t = 0; t < per; ++t) {
                              if (mask[t] == T(0)) continue;
                              T* dst = g + (gr * per + t) * width;
                              for (std::size_t j = 0; j < width; ++j) dst[j] += src[j] / denom;
                            }
                          }
                        });
}

}  // namespace

template <typename T>
Tensor<T> segment_mean(const Tensor<T>& x, std::size_t groups) {
  return masked_mean_impl<T>("segment_mean", x, groups, {});
}

template <typename T>
Tensor<T> masked_segment_mean(const Tensor<T>& x, std::size_t groups, std::span<const T> mask) {
  return masked_mean_impl<T>("masked_segment_mean", x, groups, std::vector<T>(mask.begin(), mask.end()));
}

// ---------------------------------------------------------------------------
// Attention

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t groups,
                    std::size_t heads, std::span<const T> key_mask) {
  require_rank("attention", q, 2);
  require_same_shape("attention", q, k);
  require_same_shape("attention", q, v);
  const std::size_t rows = q.dim(0), d = q.dim(1);
  if (groups == 0 || rows % groups != 0) throw DimensionError("attention: rows do not split into groups");
  if (heads == 0 || d % heads != 0) throw DimensionError("attention: width not divisible by head count");
  const std::size_t tokens = rows / groups, dh = d / heads;
  if (!key_mask.empty() && key_mask.size() != tokens) throw DimensionError("attention: key mask length");
  std::vector<std::uint8_t> real(tokens, 1);
  for (std::size_t t = 0; t < key_mask.size(); ++t) real[t] = key_mask[t] != T(0);
  if (std::find(real.begin(), real.end(), 1) == real.end()) throw UsageError("attention: every key is masked");

  const T scale_factor = T(1) / std::sqrt(static_cast<T>(dh));
  const T* qv = q.data().data();
  const T* kv = k.data().data();
  const T* vv = v.data().data();
  std::vector<T> probs(groups * heads * tokens * tokens, T(0));
  std::vector<T> out(rows * d, T(0));
  std::vector<T> logits(tokens);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < tokens; ++i) {
        const T* qi = qv + (g * tokens + i) * d + off;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < tokens; ++j) {
          if (!real[j]) continue;
          const T* kj = kv + (g * tokens + j) * d + off;
          T s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          logits[j] = s * scale_factor;
          mx = std::max(mx, logits[j]);
        }
        T* p = probs.data() + ((g * heads + h) * tokens + i) * tokens;
        T total = 0;
        for (std::size_t j = 0; j < tokens; ++j) {
          if (!real[j]) continue;
          p[j] = std::exp(logits[j] - mx);
          total += p[j];
        }
        T* oi = out.data() + (g * tokens + i) * d + off;
        for (std::size_t j = 0; j < tokens; ++j) {
          if (!real[j]) continue;
          p[j] /= total;
          const T* vj = vv + (g * tokens + j) * d + off;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }
  return make_result<T>(
      "attention", q.shape(), std::move(out), {q, k, v},
      [=, probs = std::move(probs), real = std::move(real)](Node<T>& self) {
        const T* qv = input_data(self, 0);
        const T* kv = input_data(self, 1);
        const T* vv = input_data(self, 2);
        T* gq = input_grad(self, 0);
        T* gk = input_grad(self, 1);
        T* gv = input_grad(self, 2);
        std::vector<T> dp(tokens);
        for (std::size_t g = 0; g < groups; ++g) {
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t i = 0; i < tokens; ++i) {
              const T* p = probs.data() + ((g * heads + h) * tokens + i) * tokens;
              const T* doi = self.grad.data() + (g * tokens + i) * d + off;
              T dot = 0;
              for (std::size_t j = 0; j < tokens; ++j) {
                if (!real[j]) continue;
                const T* vj = vv + (g * tokens + j) * d + off;
                T s = 0;
                for (std::size_t c = 0; c < dh; ++c) s += doi[c] * vj[c];
                dp[j] = s;
                dot += p[j] * s;
                if (gv) {
                  T* gvj = gv + (g * tokens + j) * d + off;
                  for (std::size_t c = 0; c < dh; ++c) gvj[c] += p[j] * doi[c];
                }
              }
              const T* qi = qv + (g * tokens + i) * d + off;
              for (std::size_t j = 0; j < tokens; ++j) {
                if (!real[j]) continue;
                const T ds = p[j] * (dp[j] - dot) * scale_factor;
                if (gq) {
                  const T* kj = kv + (g * tokens + j) * d + off;
                  T* gqi = gq + (g * tokens + i) * d + off;
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                }
                if (gk) {
                  T* gkj = gk + (g * tokens + j) * d + off;
                  for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------

#define BRAINFORMER_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> scale(const Tensor<T>&, T);                                                          \
  template Tensor<T> exp(const Tensor<T>&);                                                               \
  template Tensor<T> gelu(const Tensor<T>&);                                                              \
  template Tensor<T> div_scalar(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> add_row_bias(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sum(const Tensor<T>&);                                                               \
  template Tensor<T> mean(const Tensor<T>&);                                                              \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                    \
  template Tensor<T> transpose(const Tensor<T>&);                                                         \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> batched_matmul_nt(const Tensor<T>&, const Tensor<T>&, std::size_t);                  \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                              \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::size_t>);                       \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                 \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&, T);                                              \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> spatial_mean(const Tensor<T>&);                                                      \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::ptrdiff_t>);                      \
  template Tensor<T> concat_rows(std::span<const Tensor<T>>);                                             \
  template Tensor<T> segment_mean(const Tensor<T>&, std::size_t);                                         \
  template Tensor<T> masked_segment_mean(const Tensor<T>&, std::size_t, std::span<const T>);              \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,         \
                               std::size_t, std::span<const T>);

BRAINFORMER_INSTANTIATE_OPS(float)
BRAINFORMER_INSTANTIATE_OPS(double)

#undef BRAINFORMER_INSTANTIATE_OPS

}  // namespace brainformer::numerics
