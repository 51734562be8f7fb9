// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

// Row-major GEMM building blocks. Every variant accumulates into C and keeps
// a fixed summation order per output element, independent of how many rows
// the caller passes, so results are reproducible bit for bit.

#pragma once

#include <cstddef>
#include <vector>

namespace brainformer::numerics::kernels {

/// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    const T* a = A + i * K;
    for (std::size_t p = 0; p < K; ++p) {
      const T av = a[p];
      if (av == T(0)) continue;
      const T* b = B + p * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

/// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  for (std::size_t p = 0; p < K; ++p) {
    const T* a = A + p * M;
    const T* b = B + p * N;
    for (std::size_t i = 0; i < M; ++i) {
      const T av = a[i];
      if (av == T(0)) continue;
      T* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(std::size_t rows, std::size_t cols, const T* A) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = A[r * cols + c];
  return out;
}

/// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  const std::vector<T> bt = transposed(N, K, B);
  gemm_nn(M, N, K, A, bt.data(), C);
}

}  // namespace brainformer::numerics::kernels
