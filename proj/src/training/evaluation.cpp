// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/training/evaluation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "brainformer/data/dataset_io.hpp"
#include "brainformer/error.hpp"
#include "brainformer/numerics/ops.hpp"

namespace brainformer::training {

namespace ops = numerics;
using data::kRoiCount;

namespace {

void append_rows(Matrix& m, const numerics::Tensor<float>& t, std::size_t cols) {
  m.cols = cols;
  m.values.insert(m.values.end(), t.data().begin(), t.data().end());
  m.rows = m.values.size() / cols;
}

double row_dot(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double s = 0;
  for (std::size_t c = 0; c < a.cols; ++c) s += a.at(i, c) * b.at(j, c);
  return s;
}

double row_norm(const Matrix& a, std::size_t i) { return std::sqrt(row_dot(a, i, a, i)); }

double cosine(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  const double na = row_norm(a, i), nb = row_norm(b, j);
  return row_dot(a, i, b, j) / std::max(na * nb, 1e-12);
}

using EigenMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const EigenMatrix> as_eigen(const Matrix& m) {
  return Eigen::Map<const EigenMatrix>(m.values.data(), static_cast<Eigen::Index>(m.rows),
                                       static_cast<Eigen::Index>(m.cols));
}

}  // namespace

Embeddings compute_embeddings(const model::Brainformer<float>& model, const data::Dataset& dataset,
                              std::span<const std::size_t> indices, std::size_t chunk) {
  numerics::NoGradGuard no_grad;
  const std::size_t d = model.config().encoder.d_model;
  Embeddings e;
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    const auto part = indices.subspan(start, std::min(chunk, indices.size() - start));
    const auto out = model.forward(model::make_batch<float>(dataset, part));
    append_rows(e.p, out.p, d);
    append_rows(e.q, out.q, d);
    append_rows(e.pbar, out.pbar, d);
    append_rows(e.qbar, out.qbar, d);
  }
  return e;
}

RetrievalResult retrieval_accuracy(const Matrix& images, const Matrix& brain, bool cos) {
  if (images.rows != brain.rows || images.cols != brain.cols || images.rows == 0) {
    throw DimensionError("retrieval_accuracy: feature matrices must have equal, non-empty shapes");
  }
  const std::size_t m = images.rows;
  RetrievalResult r;
  r.queries = m;
  std::size_t hit1 = 0, hit5 = 0;
  for (std::size_t i = 0; i < m; ++i) {
    auto score = [&](std::size_t j) { return cos ? cosine(brain, i, images, j) : row_dot(brain, i, images, j); };
    const double truth = score(i);
    std::size_t better = 0;
    for (std::size_t j = 0; j < m; ++j) better += (j != i && score(j) > truth) ? 1 : 0;
    hit1 += better < 1 ? 1 : 0;
    hit5 += better < 5 ? 1 : 0;
  }
  r.top1 = static_cast<double>(hit1) / static_cast<double>(m);
  r.top5 = static_cast<double>(hit5) / static_cast<double>(m);
  return r;
}

RetrievalResult eval_retrieval(const model::Brainformer<float>& model, const data::Dataset& dataset, data::Split split) {
  const auto idx = dataset.indices(split);
  if (idx.empty()) throw ValidationError("eval_retrieval: the split is empty");
  const auto e = compute_embeddings(model, dataset, idx);
  return retrieval_accuracy(e.p, e.q, model.config().normalize_features);
}

GuidanceMargin guidance_margin(const Embeddings& e) {
  if (e.pbar.rows != e.qbar.rows || e.pbar.rows % kRoiCount != 0 || e.pbar.rows == 0) {
    throw DimensionError("guidance_margin: ROI feature matrices must hold 6 rows per sample");
  }
  const std::size_t n = e.pbar.rows / kRoiCount;
  double diag = 0, off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < kRoiCount; ++k) {
      for (std::size_t g = 0; g < kRoiCount; ++g) {
        const double c = cosine(e.pbar, i * kRoiCount + k, e.qbar, i * kRoiCount + g);
        (g == k ? diag : off) += c;
      }
    }
  }
  GuidanceMargin m;
  m.diagonal = diag / static_cast<double>(n * kRoiCount);
  m.off_diagonal = off / static_cast<double>(n * kRoiCount * (kRoiCount - 1));
  return m;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DimensionError("pearson: need two equal-length series");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0 || sbb <= 0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

PccResult ridge_pcc(const Matrix& x_fit, const Matrix& y_fit, const Matrix& x_test, const Matrix& y_test,
                    double lambda) {
  if (x_fit.rows != y_fit.rows || x_test.rows != y_test.rows || x_fit.cols != x_test.cols ||
      y_fit.cols != y_test.cols || x_fit.rows < 2 || x_test.rows < 2) {
    throw DimensionError("ridge_pcc: inconsistent matrix shapes");
  }
  if (!(lambda >= 0)) throw UsageError("ridge_pcc: lambda must be non-negative");
  const auto xf = as_eigen(x_fit), yf = as_eigen(y_fit), xt = as_eigen(x_test);
  const Eigen::RowVectorXd x_mean = xf.colwise().mean();
  const Eigen::RowVectorXd y_mean = yf.colwise().mean();
  const EigenMatrix xc = xf.rowwise() - x_mean;
  const EigenMatrix yc = yf.rowwise() - y_mean;
  EigenMatrix gram = xc.transpose() * xc;
  gram.diagonal().array() += lambda;
  const EigenMatrix weights = gram.ldlt().solve(xc.transpose() * yc);
  const EigenMatrix pred = ((xt.rowwise() - x_mean) * weights).rowwise() + y_mean;

  PccResult r;
  double total = 0;
  std::vector<double> truth(x_test.rows), guess(x_test.rows);
  for (std::size_t v = 0; v < y_test.cols; ++v) {
    for (std::size_t i = 0; i < x_test.rows; ++i) {
      truth[i] = y_test.at(i, v);
      guess[i] = pred(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v));
    }
    const double rv = pearson(truth, guess);
    if (std::isnan(rv)) {
      ++r.excluded;
    } else {
      total += rv;
      ++r.voxels;
    }
  }
  r.mean_pcc = r.voxels > 0 ? total / static_cast<double>(r.voxels) : 0.0;
  return r;
}

Matrix voxel_matrix(const data::Dataset& dataset, std::span<const std::size_t> indices) {
  Matrix m;
  for (const auto& layout : dataset.roi_layouts) m.cols += layout->size();
  m.rows = indices.size();
  m.values.reserve(m.rows * m.cols);
  for (const std::size_t i : indices) {
    for (const auto& roi : dataset.samples.at(i).rois) m.values.insert(m.values.end(), roi.values.begin(), roi.values.end());
  }
  if (m.values.size() != m.rows * m.cols) throw ValidationError("voxel_matrix: ROI lengths differ from the layouts");
  return m;
}

PccResult eval_pcc_probe(const model::Brainformer<float>& model, const data::Dataset& dataset, double lambda) {
  const auto fit = dataset.indices(data::Split::kTrain);
  const auto test = dataset.indices(data::Split::kTest);
  if (fit.size() < 2 || test.size() < 2) throw ValidationError("eval_pcc_probe: need train and test samples");
  const auto e_fit = compute_embeddings(model, dataset, fit);
  const auto e_test = compute_embeddings(model, dataset, test);
  return ridge_pcc(e_fit.p, voxel_matrix(dataset, fit), e_test.p, voxel_matrix(dataset, test), lambda);
}

std::vector<double> upsample_bilinear(std::span<const double> src, std::size_t src_h, std::size_t src_w,
                                      std::size_t dst_h, std::size_t dst_w) {
  if (src.size() != src_h * src_w || src_h == 0 || src_w == 0) throw DimensionError("upsample_bilinear: bad source");
  auto coord = [](std::size_t dst, std::size_t src_n, std::size_t dst_n) {
    const double x = (static_cast<double>(dst) + 0.5) * static_cast<double>(src_n) / static_cast<double>(dst_n) - 0.5;
    return std::clamp(x, 0.0, static_cast<double>(src_n - 1));
  };
  std::vector<double> out(dst_h * dst_w);
  for (std::size_t y = 0; y < dst_h; ++y) {
    const double sy = coord(y, src_h, dst_h);
    const std::size_t y0 = static_cast<std::size_t>(sy), y1 = std::min(y0 + 1, src_h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < dst_w; ++x) {
      const double sx = coord(x, src_w, dst_w);
      const std::size_t x0 = static_cast<std::size_t>(sx), x1 = std::min(x0 + 1, src_w - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = src[y0 * src_w + x0] * (1 - fx) + src[y0 * src_w + x1] * fx;
      const double bottom = src[y1 * src_w + x0] * (1 - fx) + src[y1 * src_w + x1] * fx;
      out[y * dst_w + x] = top * (1 - fy) + bottom * fy;
    }
  }
  return out;
}

Saliency attention_map(model::Brainformer<float>& model, const data::Dataset& dataset, std::size_t index) {
  if (index >= dataset.size()) throw UsageError("attention_map: sample index out of range");
  const std::size_t one[] = {index};
  const auto batch = model::make_batch<float>(dataset, one);
  const auto out = model.forward(batch);
  const auto c = ops::sum(ops::mul(ops::l2_normalize_rows(out.p), ops::l2_normalize_rows(out.q)));
  c.backward();

  const auto& a = out.featmap;  // [1, C, h, w]
  const std::size_t channels = a.dim(1), h = a.dim(2), w = a.dim(3), cells = h * w;
  const auto act = a.data();
  const auto grad = a.grad();
  std::vector<double> cam(cells, 0.0);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    double alpha = 0;
    for (std::size_t i = 0; i < cells; ++i) alpha += grad[ch * cells + i];
    alpha /= static_cast<double>(cells);
    for (std::size_t i = 0; i < cells; ++i) cam[i] += alpha * act[ch * cells + i];
  }
  model.params().zero_grad();
  for (auto& v : cam) v = std::max(v, 0.0);

  const auto& img = dataset.samples[index].image;
  Saliency s;
  s.height = img.height;
  s.width = img.width;
  s.values = upsample_bilinear(cam, h, w, s.height, s.width);
  const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
  const double min = *lo, max = *hi;
  if (!(max > 0)) {
    std::fill(s.values.begin(), s.values.end(), 0.0);
    s.degenerate = true;
    return s;
  }
  const double range = max - min;
  for (auto& v : s.values) v = range > 0 ? (v - min) / range : 1.0;
  return s;
}

void write_pgm(const Saliency& map, const std::filesystem::path& path) {
  const std::string header = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
  std::vector<char> bytes(header.begin(), header.end());
  for (const double v : map.values) {
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  data::write_file(path, bytes);
}

double inside_outside_ratio(const Saliency& map, std::span<const std::uint8_t> mask) {
  if (mask.size() != map.values.size()) throw DimensionError("inside_outside_ratio: mask size differs from map");
  double in = 0, out = 0;
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      in += map.values[i];
      ++n_in;
    } else {
      out += map.values[i];
      ++n_out;
    }
  }
  if (n_in == 0 || n_out == 0) return std::numeric_limits<double>::quiet_NaN();
  const double mean_in = in / static_cast<double>(n_in), mean_out = out / static_cast<double>(n_out);
  return mean_out > 0 ? mean_in / mean_out : std::numeric_limits<double>::infinity();
}

}  // namespace brainformer::training
