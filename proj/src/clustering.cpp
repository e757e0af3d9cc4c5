#include "fuss/clustering.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "fuss/errors.hpp"

namespace fuss {

CentroidMatrix::CentroidMatrix(Matrix rows) : rows_(std::move(rows)) {
  if (rows_.rows() == 0 || rows_.cols() == 0) throw ConfigError("centroid matrix needs rows and columns");
}

CentroidMatrix CentroidMatrix::random(std::size_t num_classes, std::size_t dim, Rng& rng) {
  if (num_classes == 0 || dim == 0) throw ConfigError("centroid matrix needs rows and columns");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix rows(num_classes, dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto r = rows.row(c);
    double n = 0.0;
    while (n == 0.0) {
      for (auto& v : r) v = normal(rng);
      n = norm(r);
    }
    for (auto& v : r) v /= n;
  }
  return CentroidMatrix(std::move(rows));
}

bool CentroidMatrix::all_finite() const {
  const auto v = rows_.values();
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

ScoreTensor score(const FeatureMap& features, const CentroidMatrix& centroids, bool cosine) {
  if (features.dim() != centroids.dim()) {
    throw ConfigError(fmt::format("scores between dim {} features and dim {} centroids", features.dim(),
                                  centroids.dim()));
  }
  Matrix flat = flatten(features);
  if (!cosine) return {features.height(), features.width(), multiply_transposed(flat, centroids.matrix())};
  auto scores = multiply_transposed(normalize_rows(flat).unit, normalize_rows(centroids.matrix()).unit);
  for (double& v : scores.values()) v = std::clamp(v, -1.0, 1.0);
  return {features.height(), features.width(), std::move(scores)};
}

SegmentationMask assign(const ScoreTensor& scores) {
  const auto& s = scores.scores;
  std::vector<std::int32_t> labels(s.rows(), 0);
  for (std::size_t p = 0; p < s.rows(); ++p) {
    const auto row = s.row(p);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    labels[p] = static_cast<std::int32_t>(best);
  }
  return SegmentationMask(scores.height, scores.width, std::move(labels));
}

double inter_cluster_similarity(const CentroidMatrix& centroids) {
  double total = 0.0;
  for (std::size_t c = 0; c < centroids.num_classes(); ++c) {
    for (std::size_t o = 0; o < centroids.num_classes(); ++o) {
      if (o != c) total += cosine_similarity(centroids.row(c), centroids.row(o));
    }
  }
  return total;
}

namespace {

double intra_variance(std::span<const FeatureMap> features, std::span<const SegmentationMask> assignments,
                      const CentroidMatrix& centroids) {
  if (features.size() != assignments.size()) throw ConfigError("one assignment mask per feature map is required");
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    if (f.dim() != centroids.dim()) throw ConfigError("cluster loss dimension mismatch");
    for (std::size_t p = 0; p < f.pixels(); ++p) {
      const auto h = f.pixel(p);
      const auto m = centroids.row(static_cast<std::size_t>(assignments[i][p]));
      for (std::size_t d = 0; d < h.size(); ++d) {
        const double diff = h[d] - m[d];
        total += diff * diff;
      }
    }
  }
  return total;
}

std::vector<SegmentationMask> assign_all(std::span<const FeatureMap> features, const CentroidMatrix& centroids,
                                         bool cosine) {
  std::vector<SegmentationMask> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(assign(score(f, centroids, cosine)));
  return out;
}

}  // namespace

double cluster_loss_with(std::span<const FeatureMap> features, std::span<const SegmentationMask> assignments,
                         const CentroidMatrix& centroids, double lambda) {
  return intra_variance(features, assignments, centroids) + lambda * inter_cluster_similarity(centroids);
}

ClusterLoss cluster_loss(std::span<const FeatureMap> features, const CentroidMatrix& centroids, double lambda,
                         bool cosine) {
  if (lambda < 0.0) throw ConfigError("cluster loss lambda must be nonnegative");
  ClusterLoss out;
  out.assignments = assign_all(features, centroids, cosine);
  out.intra = intra_variance(features, out.assignments, centroids);
  out.inter = inter_cluster_similarity(centroids);
  out.loss = out.intra + lambda * out.inter;
  return out;
}

Matrix cluster_loss_grad(std::span<const FeatureMap> features, std::span<const SegmentationMask> assignments,
                         const CentroidMatrix& centroids, double lambda) {
  if (features.size() != assignments.size()) throw ConfigError("one assignment mask per feature map is required");
  const std::size_t k = centroids.num_classes();
  const std::size_t dim = centroids.dim();
  Matrix grad(k, dim);

  // Intra term: 2 (m_c - h) for every pixel assigned to c.
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    if (f.dim() != dim) throw ConfigError("cluster loss dimension mismatch");
    for (std::size_t p = 0; p < f.pixels(); ++p) {
      const auto c = static_cast<std::size_t>(assignments[i][p]);
      const auto h = f.pixel(p);
      const auto m = centroids.row(c);
      auto g = grad.row(c);
      for (std::size_t d = 0; d < dim; ++d) g[d] += 2.0 * (m[d] - h[d]);
    }
  }

  if (lambda == 0.0) return grad;
  // Inter term: every unordered pair appears twice in the ordered sum, and
  // d cos(a, b) / da = (b_hat - cos * a_hat) / |a|.
  const auto units = normalize_rows(centroids.matrix());
  for (std::size_t c = 0; c < k; ++c) {
    if (units.norms[c] == 0.0) continue;
    const auto uc = units.unit.row(c);
    auto g = grad.row(c);
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c || units.norms[o] == 0.0) continue;
      const auto uo = units.unit.row(o);
      const double cos = dot(uc, uo);
      for (std::size_t d = 0; d < dim; ++d) g[d] += 2.0 * lambda * (uo[d] - cos * uc[d]) / units.norms[c];
    }
  }
  return grad;
}

Matrix cluster_loss_grad(std::span<const FeatureMap> features, const CentroidMatrix& centroids, double lambda,
                         bool cosine) {
  const auto assignments = assign_all(features, centroids, cosine);
  return cluster_loss_grad(features, assignments, centroids, lambda);
}

void centroid_step(CentroidMatrix& centroids, const Matrix& grad, AdamState& state) {
  if (grad.rows() != centroids.num_classes() || grad.cols() != centroids.dim()) {
    throw ConfigError("centroid gradient shape mismatch");
  }
  adam_step(centroids.flat(), grad.values(), state);
}

}  // namespace fuss
