#pragma once

// Run outputs on disk (JSON report, CSV series, JSONL audit), the ablation
// sweep table and the paired comparison of two reports.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuss/evaluation.hpp"
#include "fuss/federation.hpp"

namespace fuss {

nlohmann::json to_json(const RunReport& report);

/// round, client, loss terms, shift norms and validation mIoU, one row per
/// client and round (round 0 rows carry the initialization scores).
std::string rounds_csv(const RunReport& report);

/// image_id, method, iou.
std::string per_image_csv(const RunReport& report);

std::string audit_jsonl(const RunReport& report);

/// Writes resolved_config.json, report.json, rounds.csv, per_image.csv and
/// audit.jsonl. `generated_at` becomes the only non-reproducible field.
void write_run_outputs(const std::filesystem::path& dir, const RunReport& report,
                       const std::optional<std::string>& generated_at = std::nullopt);

/// Name of the timestamp field excluded from reproducibility comparisons.
inline constexpr const char* kTimestampField = "generated_at";

struct AblationVariant {
  std::string name;  // e.g. "fedcc_kmeans[WEC]"
  AggregationPolicy policy;
};

/// Local-only, FedAvg over {E, C, EC, WE, WC, WEC}, and both centroid
/// clustering strategies over {C, WC, EC, WEC}: fifteen rows.
std::vector<AblationVariant> default_ablation(const AggregationPolicy& base);

/// Every strategy crossed with {none, E, C, EC}, doubled over W on/off when
/// `with_weighting` is set.
std::vector<AblationVariant> ablation_grid(const std::vector<Strategy>& strategies, bool with_weighting,
                                           const AggregationPolicy& base);

struct AblationRow {
  AblationVariant variant;
  std::optional<double> global_miou;
  double client_mean = 0.0;
  double client_best = 0.0;
  double client_worst = 0.0;
};

AblationRow ablation_row(const AblationVariant& variant, const RunReport& report);

/// method,strategy,W,E,C,global_miou,client_mean,client_best,client_worst
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct PerImageSeries {
  std::string method;
  std::vector<std::string> image_ids;
  std::vector<double> iou;
};

/// Reads the per-image series from a report.json (or a run directory).
PerImageSeries read_per_image_series(const std::filesystem::path& path);

struct Comparison {
  std::string method_a;
  std::string method_b;
  TTestResult ttest;
  WilcoxonResult wilcoxon;
};

/// Pairs the series by image id. Throws DataError when the id sets differ.
Comparison compare_series(const PerImageSeries& a, const PerImageSeries& b);

nlohmann::json to_json(const Comparison& comparison);

}  // namespace fuss
