#pragma once

// Scoring for unsupervised predictions: Hungarian-matched IoU, paired
// significance tests over per-image scores, and centroid distance reports.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fuss/clustering.hpp"
#include "fuss/tensor.hpp"

namespace fuss {

/// Pixel counts, rows = predicted cluster, columns = truth class.
class CountMatrix {
 public:
  CountMatrix() = default;
  CountMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), counts_(rows * cols, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::int64_t operator()(std::size_t r, std::size_t c) const { return counts_[r * cols_ + c]; }
  std::int64_t& operator()(std::size_t r, std::size_t c) { return counts_[r * cols_ + c]; }

  bool operator==(const CountMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::int64_t> counts_;
};

/// Sizes of 0 are inferred from the largest label present.
CountMatrix confusion(std::span<const SegmentationMask> pred, std::span<const SegmentationMask> truth,
                      std::size_t num_pred = 0, std::size_t num_truth = 0);

/// Maximum-weight assignment of predicted rows to truth columns. Entry p is
/// the matched column or -1. Among optimal assignments the lexicographically
/// smallest (over rows, then padded rows) is returned.
std::vector<int> hungarian_match(const CountMatrix& counts);

/// Total matched pixels for a matching.
std::int64_t matched_total(const CountMatrix& counts, std::span<const int> matching);

struct IouReport {
  std::vector<double> per_class_iou;  // indexed by truth class; 0 for absent classes
  std::vector<bool> present;          // class seen in truth or in its matched prediction
  double miou = 0.0;
  std::vector<double> per_image;      // matching held fixed
  std::vector<int> matching;          // predicted cluster -> truth class or -1
};

IouReport miou(std::span<const SegmentationMask> pred, std::span<const SegmentationMask> truth,
               std::size_t num_pred = 0, std::size_t num_truth = 0);

struct TTestResult {
  std::size_t n = 0;
  double mean_difference = 0.0;
  double t = 0.0;
  double p = 0.0;  // NaN when degenerate
  bool degenerate = false;
};

/// Two-sided paired t-test on a - b.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

/// CDF of Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

enum class WilcoxonMethod { Auto, Exact, Normal };

struct WilcoxonResult {
  std::size_t n = 0;  // nonzero differences
  double w_plus = 0.0;
  double w_minus = 0.0;
  double w = 0.0;     // min(w_plus, w_minus)
  double p = 0.0;     // NaN when degenerate
  bool exact = false;
  bool degenerate = false;
};

/// Two-sided signed-rank test on a - b. Zero differences are dropped and
/// tied magnitudes get average ranks. Auto is exact for n <= 20.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    WilcoxonMethod method = WilcoxonMethod::Auto);

struct DiscriminabilityReport {
  Matrix distances;  // |C| x |C| Euclidean
  double min_distance = 0.0;
  double mean_distance = 0.0;
};

DiscriminabilityReport discriminability(const CentroidMatrix& centroids);

}  // namespace fuss
