#include "fuss/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <fmt/core.h>

#include "fuss/errors.hpp"

namespace fuss {

namespace {

std::size_t infer_bound(std::span<const SegmentationMask> masks) {
  std::int32_t bound = 0;
  for (const auto& m : masks) bound = std::max(bound, m.label_bound());
  return static_cast<std::size_t>(bound);
}

void check_pairs(std::span<const SegmentationMask> pred, std::span<const SegmentationMask> truth) {
  if (pred.size() != truth.size()) {
    throw DataError(fmt::format("{} predictions for {} truth masks", pred.size(), truth.size()));
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].height() != truth[i].height() || pred[i].width() != truth[i].width()) {
      throw DataError(fmt::format("mask {} shape differs between prediction and truth", i));
    }
  }
}

// Minimum-cost perfect assignment on a square integer cost matrix
// (potentials method). Returns column per row.
std::vector<std::size_t> solve_min_cost(const std::vector<std::int64_t>& cost, std::size_t n) {
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<std::int64_t> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      std::int64_t delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const std::int64_t cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

std::int64_t assignment_value(const std::vector<std::int64_t>& weight, std::size_t n,
                              const std::vector<std::size_t>& cols) {
  std::int64_t total = 0;
  for (std::size_t r = 0; r < n; ++r) total += weight[r * n + cols[r]];
  return total;
}

// Best total weight with rows < fixed_rows pinned to `fixed`.
std::int64_t best_with_prefix(const std::vector<std::int64_t>& weight, std::size_t n,
                              const std::vector<std::size_t>& fixed) {
  const std::size_t k = fixed.size();
  std::vector<bool> col_used(n, false);
  std::int64_t fixed_total = 0;
  for (std::size_t r = 0; r < k; ++r) {
    col_used[fixed[r]] = true;
    fixed_total += weight[r * n + fixed[r]];
  }
  const std::size_t m = n - k;
  if (m == 0) return fixed_total;
  std::vector<std::size_t> free_cols;
  for (std::size_t c = 0; c < n; ++c) {
    if (!col_used[c]) free_cols.push_back(c);
  }
  std::int64_t max_w = 0;
  for (auto w : weight) max_w = std::max(max_w, w);
  std::vector<std::int64_t> cost(m * m);
  std::vector<std::int64_t> sub(m * m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      sub[r * m + c] = weight[(k + r) * n + free_cols[c]];
      cost[r * m + c] = max_w - sub[r * m + c];
    }
  }
  return fixed_total + assignment_value(sub, m, solve_min_cost(cost, m));
}

}  // namespace

CountMatrix confusion(std::span<const SegmentationMask> pred, std::span<const SegmentationMask> truth,
                      std::size_t num_pred, std::size_t num_truth) {
  check_pairs(pred, truth);
  num_pred = std::max(num_pred, infer_bound(pred));
  num_truth = std::max(num_truth, infer_bound(truth));
  CountMatrix counts(num_pred, num_truth);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t px = 0; px < pred[i].pixels(); ++px) {
      counts(static_cast<std::size_t>(pred[i][px]), static_cast<std::size_t>(truth[i][px])) += 1;
    }
  }
  return counts;
}

std::vector<int> hungarian_match(const CountMatrix& counts) {
  const std::size_t n = std::max(counts.rows(), counts.cols());
  std::vector<int> matching(counts.rows(), -1);
  if (n == 0) return matching;
  std::vector<std::int64_t> weight(n * n, 0);
  for (std::size_t r = 0; r < counts.rows(); ++r) {
    for (std::size_t c = 0; c < counts.cols(); ++c) {
      if (counts(r, c) < 0) throw DataError("confusion counts must be nonnegative");
      weight[r * n + c] = counts(r, c);
    }
  }
  const std::int64_t optimum = best_with_prefix(weight, n, {});

  // Fix rows in order to the smallest column that still admits the optimum.
  std::vector<std::size_t> fixed;
  std::vector<bool> col_used(n, false);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (col_used[c]) continue;
      fixed.push_back(c);
      if (best_with_prefix(weight, n, fixed) == optimum) {
        col_used[c] = true;
        break;
      }
      fixed.pop_back();
    }
  }
  for (std::size_t r = 0; r < counts.rows(); ++r) {
    if (fixed[r] < counts.cols()) matching[r] = static_cast<int>(fixed[r]);
  }
  return matching;
}

std::int64_t matched_total(const CountMatrix& counts, std::span<const int> matching) {
  std::int64_t total = 0;
  for (std::size_t r = 0; r < matching.size(); ++r) {
    if (matching[r] >= 0) total += counts(r, static_cast<std::size_t>(matching[r]));
  }
  return total;
}

namespace {

struct ClassIou {
  std::vector<double> iou;
  std::vector<bool> present;
  double mean = 0.0;
};

ClassIou class_iou(const CountMatrix& counts, std::span<const int> matching) {
  ClassIou out{std::vector<double>(counts.cols(), 0.0), std::vector<bool>(counts.cols(), false), 0.0};
  std::vector<int> pred_of(counts.cols(), -1);
  for (std::size_t r = 0; r < matching.size(); ++r) {
    if (matching[r] >= 0) pred_of[static_cast<std::size_t>(matching[r])] = static_cast<int>(r);
  }
  std::size_t present = 0;
  double total = 0.0;
  for (std::size_t t = 0; t < counts.cols(); ++t) {
    std::int64_t truth_count = 0;
    for (std::size_t r = 0; r < counts.rows(); ++r) truth_count += counts(r, t);
    std::int64_t tp = 0, pred_count = 0;
    if (pred_of[t] >= 0) {
      const auto p = static_cast<std::size_t>(pred_of[t]);
      tp = counts(p, t);
      for (std::size_t c = 0; c < counts.cols(); ++c) pred_count += counts(p, c);
    }
    const std::int64_t uni = truth_count + pred_count - tp;
    if (uni == 0) continue;
    out.present[t] = true;
    out.iou[t] = static_cast<double>(tp) / static_cast<double>(uni);
    total += out.iou[t];
    ++present;
  }
  out.mean = present ? total / static_cast<double>(present) : 0.0;
  return out;
}

}  // namespace

IouReport miou(std::span<const SegmentationMask> pred, std::span<const SegmentationMask> truth,
               std::size_t num_pred, std::size_t num_truth) {
  if (pred.empty()) throw DataError("mIoU needs at least one mask");
  const auto counts = confusion(pred, truth, num_pred, num_truth);
  IouReport report;
  report.matching = hungarian_match(counts);
  auto overall = class_iou(counts, report.matching);
  report.per_class_iou = std::move(overall.iou);
  report.present = std::move(overall.present);
  report.miou = overall.mean;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto single = confusion(pred.subspan(i, 1), truth.subspan(i, 1), counts.rows(), counts.cols());
    report.per_image.push_back(class_iou(single, report.matching).mean);
  }
  return report;
}

double student_t_cdf(double t, double df) {
  return boost::math::cdf(boost::math::students_t_distribution<double>(df), t);
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError(fmt::format("paired series lengths differ: {} vs {}", a.size(), b.size()));
  if (a.size() < 2) throw DataError("paired t-test needs at least two pairs");
  TTestResult result;
  result.n = a.size();
  const double n = static_cast<double>(a.size());
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  result.mean_difference = mean;
  if (!(sd > 0.0)) {
    result.degenerate = true;
    result.t = 0.0;
    result.p = std::numeric_limits<double>::quiet_NaN();
    return result;
  }
  result.t = mean / (sd / std::sqrt(n));
  const boost::math::students_t_distribution<double> dist(n - 1.0);
  result.p = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(result.t))), 0.0, 1.0);
  return result;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, WilcoxonMethod method) {
  if (a.size() != b.size()) throw DataError(fmt::format("paired series lengths differ: {} vs {}", a.size(), b.size()));
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  }
  WilcoxonResult result;
  result.n = d.size();
  if (d.empty()) {
    result.degenerate = true;
    result.p = std::numeric_limits<double>::quiet_NaN();
    return result;
  }
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });

  // Doubled average ranks keep ties integral.
  std::vector<int> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const int r2 = static_cast<int>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  int w2_plus = 0;
  int w2_total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    w2_total += rank2[i];
    if (d[i] > 0) w2_plus += rank2[i];
  }
  result.w_plus = w2_plus / 2.0;
  result.w_minus = (w2_total - w2_plus) / 2.0;
  result.w = std::min(result.w_plus, result.w_minus);

  const bool exact = method == WilcoxonMethod::Exact || (method == WilcoxonMethod::Auto && n <= 20);
  result.exact = exact;
  if (exact) {
    // Distribution of the doubled positive-rank sum over all 2^n sign patterns.
    std::vector<double> ways(static_cast<std::size_t>(w2_total) + 1, 0.0);
    ways[0] = 1.0;
    int reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (int s = reach; s >= 0; --s) ways[static_cast<std::size_t>(s + rank2[i])] += ways[static_cast<std::size_t>(s)];
      reach += rank2[i];
    }
    const double total = std::ldexp(1.0, static_cast<int>(n));
    double lower = 0.0, upper = 0.0;
    for (int s = 0; s <= w2_total; ++s) {
      if (s <= w2_plus) lower += ways[static_cast<std::size_t>(s)];
      if (s >= w2_plus) upper += ways[static_cast<std::size_t>(s)];
    }
    result.p = std::min(1.0, 2.0 * std::min(lower, upper) / total);
    return result;
  }
  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (!(var > 0.0)) {
    result.degenerate = true;
    result.p = std::numeric_limits<double>::quiet_NaN();
    return result;
  }
  const double z = std::max(0.0, std::abs(result.w_plus - mean) - 0.5) / std::sqrt(var);
  const boost::math::normal_distribution<double> normal;
  result.p = std::clamp(2.0 * boost::math::cdf(boost::math::complement(normal, z)), 0.0, 1.0);
  return result;
}

DiscriminabilityReport discriminability(const CentroidMatrix& centroids) {
  const std::size_t c = centroids.num_classes();
  if (c < 2) throw ConfigError("discriminability needs at least two centroids");
  DiscriminabilityReport report{Matrix(c, c), std::numeric_limits<double>::infinity(), 0.0};
  double total = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = i + 1; j < c; ++j) {
      double ss = 0.0;
      for (std::size_t k = 0; k < centroids.dim(); ++k) {
        const double diff = centroids.row(i)[k] - centroids.row(j)[k];
        ss += diff * diff;
      }
      const double dist = std::sqrt(ss);
      report.distances(i, j) = report.distances(j, i) = dist;
      report.min_distance = std::min(report.min_distance, dist);
      total += 2.0 * dist;
    }
  }
  report.mean_distance = total / static_cast<double>(c * (c - 1));
  return report;
}

}  // namespace fuss
