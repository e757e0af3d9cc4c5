#include "fuss/tensor.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "fuss/errors.hpp"

namespace fuss {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ConfigError(fmt::format("matrix {}x{} given {} values", rows_, cols_, values_.size()));
  }
}

FeatureMap::FeatureMap(std::size_t height, std::size_t width, std::size_t dim, std::vector<double> values)
    : height_(height), width_(width), dim_(dim), values_(std::move(values)) {
  if (values_.size() != height_ * width_ * dim_) {
    throw ConfigError(fmt::format("feature map {}x{}x{} given {} values", height_, width_, dim_,
                                  values_.size()));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw DataError("feature map contains a non-finite value");
  }
}

FeatureMap FeatureMap::zeros(std::size_t height, std::size_t width, std::size_t dim) {
  return FeatureMap(height, width, dim, std::vector<double>(height * width * dim, 0.0));
}

SegmentationMask::SegmentationMask(std::size_t height, std::size_t width, std::vector<std::int32_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
  if (labels_.size() != height_ * width_) {
    throw ConfigError(fmt::format("mask {}x{} given {} labels", height_, width_, labels_.size()));
  }
  for (auto l : labels_) {
    if (l < 0) throw DataError("mask contains a negative label");
  }
}

std::int32_t SegmentationMask::label_bound() const {
  std::int32_t bound = 0;
  for (auto l : labels_) bound = std::max(bound, l + 1);
  return bound;
}

SimilarityTensor::SimilarityTensor(std::size_t h1, std::size_t w1, std::size_t h2, std::size_t w2,
                                   Matrix values)
    : h1_(h1), w1_(w1), h2_(h2), w2_(w2), values_(std::move(values)) {
  if (values_.rows() != h1 * w1 || values_.cols() != h2 * w2) {
    throw ConfigError("similarity tensor shape does not match its storage");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

CosineResult cosine_similarity_checked(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ConfigError(fmt::format("cosine of vectors with dims {} and {}", a.size(), b.size()));
  }
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  return {std::clamp(dot(a, b) / (na * nb), -1.0, 1.0), false};
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  return cosine_similarity_checked(a, b).value;
}

Matrix flatten(const FeatureMap& features) {
  std::vector<double> values(features.values().begin(), features.values().end());
  return Matrix(features.pixels(), features.dim(), std::move(values));
}

FeatureMap unflatten(const Matrix& rows, std::size_t height, std::size_t width) {
  if (rows.rows() != height * width) {
    throw ConfigError(fmt::format("cannot reshape {} rows into {}x{}", rows.rows(), height, width));
  }
  std::vector<double> values(rows.values().begin(), rows.values().end());
  return FeatureMap(height, width, rows.cols(), std::move(values));
}

UnitRows normalize_rows(const Matrix& rows) {
  UnitRows out{Matrix(rows.rows(), rows.cols()), std::vector<double>(rows.rows(), 0.0)};
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    const double n = norm(rows.row(r));
    out.norms[r] = n;
    if (n == 0.0) continue;
    auto src = rows.row(r);
    auto dst = out.unit.row(r);
    for (std::size_t c = 0; c < rows.cols(); ++c) dst[c] = src[c] / n;
  }
  return out;
}

Matrix multiply_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ConfigError(fmt::format("inner dimensions {} and {} differ", a.cols(), b.cols()));
  }
  Matrix out(a.rows(), b.rows());
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i).data();
    double* oi = out.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* bj = b.row(j).data();
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += ai[t] * bj[t];
      oi[j] = acc;
    }
  }
  return out;
}

SimilarityTensor similarity_tensor(const FeatureMap& first, const FeatureMap& second) {
  if (first.dim() != second.dim()) {
    throw ConfigError(fmt::format("similarity between dims {} and {}", first.dim(), second.dim()));
  }
  const auto u1 = normalize_rows(flatten(first));
  const auto u2 = normalize_rows(flatten(second));
  Matrix values = multiply_transposed(u1.unit, u2.unit);
  for (double& v : values.values()) v = std::clamp(v, -1.0, 1.0);
  return SimilarityTensor(first.height(), first.width(), second.height(), second.width(),
                          std::move(values));
}

}  // namespace fuss
