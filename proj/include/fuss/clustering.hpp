#pragma once

// Semantic prototypes: pixel-to-centroid scores, hard mask assignment and
// the intra-variance plus inter-similarity cluster loss.

#include <cstddef>
#include <span>
#include <vector>

#include "fuss/adam.hpp"
#include "fuss/rng.hpp"
#include "fuss/tensor.hpp"

namespace fuss {

/// |C| x D matrix of prototypes; row count is fixed for an experiment.
class CentroidMatrix {
 public:
  CentroidMatrix() = default;
  explicit CentroidMatrix(Matrix rows);
  CentroidMatrix(std::size_t num_classes, std::size_t dim) : CentroidMatrix(Matrix(num_classes, dim)) {}

  /// Unit-Gaussian rows, each scaled to unit length.
  static CentroidMatrix random(std::size_t num_classes, std::size_t dim, Rng& rng);

  std::size_t num_classes() const { return rows_.rows(); }
  std::size_t dim() const { return rows_.cols(); }
  std::span<const double> row(std::size_t c) const { return rows_.row(c); }
  const Matrix& matrix() const { return rows_; }

  std::span<const double> flat() const { return rows_.values(); }
  std::span<double> flat() { return rows_.values(); }

  bool all_finite() const;
  bool operator==(const CentroidMatrix&) const = default;

 private:
  Matrix rows_;
};

/// Pixel-by-class score tensor, stored (H*W) x |C|.
struct ScoreTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  Matrix scores;

  double at(std::size_t h, std::size_t w, std::size_t c) const { return scores(h * width + w, c); }
};

/// Inner products <H[h,w], m_c>, or cosine similarities when `cosine` is set
/// (zero rows score 0).
ScoreTensor score(const FeatureMap& features, const CentroidMatrix& centroids, bool cosine = false);

/// Argmax per pixel, ties to the lowest class.
SegmentationMask assign(const ScoreTensor& scores);

struct ClusterLoss {
  double loss = 0.0;
  double intra = 0.0;
  double inter = 0.0;
  std::vector<SegmentationMask> assignments;
};

/// Hard assignments from score/assign, then
///   sum ||H - m_a||^2 + lambda * sum_{c != c'} cos(m_c, m_c').
ClusterLoss cluster_loss(std::span<const FeatureMap> features, const CentroidMatrix& centroids, double lambda,
                         bool cosine = false);

/// Same loss evaluated with caller-supplied assignments.
double cluster_loss_with(std::span<const FeatureMap> features, std::span<const SegmentationMask> assignments,
                         const CentroidMatrix& centroids, double lambda);

/// Gradient with respect to the centroids, assignments held constant.
Matrix cluster_loss_grad(std::span<const FeatureMap> features, std::span<const SegmentationMask> assignments,
                         const CentroidMatrix& centroids, double lambda);
Matrix cluster_loss_grad(std::span<const FeatureMap> features, const CentroidMatrix& centroids, double lambda,
                         bool cosine = false);

/// Sum over classes' cosine similarities, ordered pairs c != c'.
double inter_cluster_similarity(const CentroidMatrix& centroids);

void centroid_step(CentroidMatrix& centroids, const Matrix& grad, AdamState& state);

}  // namespace fuss
