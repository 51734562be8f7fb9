// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "brainformer/data/fmri.hpp"
#include "brainformer/model/brainformer.hpp"

namespace brainformer::training {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Frozen features of a set of samples, in the order of `indices`.
struct Embeddings {
  Matrix p, q;        // [M, d]
  Matrix pbar, qbar;  // [M * 6, d], row i*6 + k
};

Embeddings compute_embeddings(const model::Brainformer<float>& model, const data::Dataset& dataset,
                              std::span<const std::size_t> indices, std::size_t chunk = 64);

struct RetrievalResult {
  double top1 = 0, top5 = 0;
  std::size_t queries = 0;
};

/// Query i (row of `brain`) ranks every row j of `images` by dot product (or
/// cosine when `cosine`). Correct at rank r when fewer than r candidates
/// score strictly higher than the true pair.
RetrievalResult retrieval_accuracy(const Matrix& images, const Matrix& brain, bool cosine = true);

RetrievalResult eval_retrieval(const model::Brainformer<float>& model, const data::Dataset& dataset,
                               data::Split split = data::Split::kTest);

struct GuidanceMargin {
  double diagonal = 0;      // mean cos(pbar^k, qbar^k)
  double off_diagonal = 0;  // mean cos(pbar^k, qbar^g), g != k
  double margin() const { return diagonal - off_diagonal; }
};

GuidanceMargin guidance_margin(const Embeddings& embeddings);

struct PccResult {
  double mean_pcc = 0;
  std::size_t voxels = 0;    // voxels scored
  std::size_t excluded = 0;  // constant voxels or constant predictions
};

/// Pearson correlation; NaN when either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

/// Ridge regression with intercept (features and targets centred on the fit
/// set) from x to every column of y, scored by Pearson r on the test rows.
PccResult ridge_pcc(const Matrix& x_fit, const Matrix& y_fit, const Matrix& x_test, const Matrix& y_test,
                    double lambda = 1e-3);

/// All voxel values of the given samples, ROIs concatenated in order.
Matrix voxel_matrix(const data::Dataset& dataset, std::span<const std::size_t> indices);

/// Ridge probe from frozen image features p to voxel values, fit on the train
/// split and scored on the test split.
PccResult eval_pcc_probe(const model::Brainformer<float>& model, const data::Dataset& dataset, double lambda = 1e-3);

struct Saliency {
  std::size_t height = 0, width = 0;
  std::vector<double> values;  // row-major, in [0, 1]
  /// The rectified map was identically zero; `values` is all zeros.
  bool degenerate = false;
};

/// Gradient-weighted class activation of c = cos(p, q) on the last feature
/// map, upsampled bilinearly to the image size and min-max normalized.
Saliency attention_map(model::Brainformer<float>& model, const data::Dataset& dataset, std::size_t index);

/// Bilinear resize (half-pixel centres, edge clamped).
std::vector<double> upsample_bilinear(std::span<const double> src, std::size_t src_h, std::size_t src_w,
                                      std::size_t dst_h, std::size_t dst_w);

/// Binary 8-bit portable graymap.
void write_pgm(const Saliency& map, const std::filesystem::path& path);

/// Mean saliency inside the mask divided by the mean outside it.
double inside_outside_ratio(const Saliency& map, std::span<const std::uint8_t> mask);

}  // namespace brainformer::training
