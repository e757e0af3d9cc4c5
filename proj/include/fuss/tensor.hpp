#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fuss {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Dense H x W x D pixel embedding map, layout (h, w, channel) row-major.
/// Immutable once constructed; every value is checked to be finite.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t height, std::size_t width, std::size_t dim, std::vector<double> values);

  static FeatureMap zeros(std::size_t height, std::size_t width, std::size_t dim);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t dim() const { return dim_; }
  std::size_t pixels() const { return height_ * width_; }

  std::span<const double> pixel(std::size_t index) const { return {values_.data() + index * dim_, dim_}; }
  std::span<const double> pixel(std::size_t h, std::size_t w) const { return pixel(h * width_ + w); }
  std::span<const double> values() const { return values_; }

  bool operator==(const FeatureMap&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

/// H x W integer label map; the argmax form of a one-hot segmentation.
class SegmentationMask {
 public:
  SegmentationMask() = default;
  SegmentationMask(std::size_t height, std::size_t width, std::vector<std::int32_t> labels);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t pixels() const { return labels_.size(); }

  std::int32_t operator[](std::size_t index) const { return labels_[index]; }
  std::int32_t at(std::size_t h, std::size_t w) const { return labels_[h * width_ + w]; }
  std::span<const std::int32_t> labels() const { return labels_; }

  /// Largest label + 1 (0 for an empty mask).
  std::int32_t label_bound() const;

  bool operator==(const SegmentationMask&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::int32_t> labels_;
};

/// Pairwise cosine similarities between the pixels of two feature maps,
/// indexed (h, w, m, n) and stored as a (H1*W1) x (H2*W2) matrix.
class SimilarityTensor {
 public:
  SimilarityTensor() = default;
  SimilarityTensor(std::size_t h1, std::size_t w1, std::size_t h2, std::size_t w2, Matrix values);

  std::size_t h1() const { return h1_; }
  std::size_t w1() const { return w1_; }
  std::size_t h2() const { return h2_; }
  std::size_t w2() const { return w2_; }

  double at(std::size_t h, std::size_t w, std::size_t m, std::size_t n) const {
    return values_(h * w1_ + w, m * w2_ + n);
  }
  const Matrix& matrix() const { return values_; }

  bool same_shape(const SimilarityTensor& other) const {
    return h1_ == other.h1_ && w1_ == other.w1_ && h2_ == other.h2_ && w2_ == other.w2_;
  }

 private:
  std::size_t h1_ = 0, w1_ = 0, h2_ = 0, w2_ = 0;
  Matrix values_;
};

struct CosineResult {
  double value = 0.0;
  bool degenerate = false;  // one of the inputs had zero norm
};

/// Cosine similarity clamped to [-1, 1]. A zero-norm input yields 0 and sets
/// the degenerate flag.
CosineResult cosine_similarity_checked(std::span<const double> a, std::span<const double> b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

SimilarityTensor similarity_tensor(const FeatureMap& first, const FeatureMap& second);

/// (H*W) x D view of a feature map, row h*W + w holding pixel (h, w).
Matrix flatten(const FeatureMap& features);
FeatureMap unflatten(const Matrix& rows, std::size_t height, std::size_t width);

/// Rows scaled to unit length; zero rows stay zero. Norms are returned alongside.
struct UnitRows {
  Matrix unit;
  std::vector<double> norms;
};
UnitRows normalize_rows(const Matrix& rows);

/// out = a * b^T for row-major a (n x k) and b (m x k).
Matrix multiply_transposed(const Matrix& a, const Matrix& b);

}  // namespace fuss
