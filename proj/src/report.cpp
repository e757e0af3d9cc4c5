#include "fuss/report.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <fmt/core.h>

#include "fuss/errors.hpp"

namespace fuss {

using nlohmann::json;

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

json number_or_null(const std::optional<double>& v) { return v ? number_or_null(*v) : json(); }

json to_json(const EvalSummary& e) {
  json clients = json::array();
  for (double v : e.client_miou) clients.push_back(number_or_null(v));
  return {{"global_miou", number_or_null(e.global_miou)},
          {"client_miou", clients},
          {"client_mean", e.client_mean},
          {"client_best", e.client_best},
          {"client_worst", e.client_worst}};
}

json to_json(const LocalRoundLog& log) {
  return {{"client", log.client_id},        {"steps", log.steps},
          {"corr_loss", log.corr_loss},     {"cluster_loss", log.cluster_loss},
          {"prox_loss", log.prox_loss},     {"moon_loss", log.moon_loss},
          {"moon_skipped", log.moon_skipped}, {"clamped_selections", log.clamped_selections}};
}

std::string csv_number(double v) { return std::isfinite(v) ? fmt::format("{:.17g}", v) : std::string(); }

std::string csv_number(const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out << text;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

}  // namespace

json to_json(const RunReport& report) {
  json rounds = json::array();
  for (const auto& r : report.rounds) {
    json clients = json::array();
    for (std::size_t i = 0; i < r.clients.size(); ++i) {
      auto c = to_json(r.clients[i]);
      c["centroid_shift"] = number_or_null(i < r.centroid_shift.size() ? r.centroid_shift[i] : std::nullopt);
      c["head_shift"] = number_or_null(i < r.head_shift.size() ? r.head_shift[i] : std::nullopt);
      clients.push_back(c);
    }
    rounds.push_back({{"round", r.round}, {"clients", clients}, {"eval", r.eval ? to_json(*r.eval) : json()}});
  }
  json per_image = json::array();
  for (std::size_t i = 0; i < report.image_ids.size(); ++i) {
    per_image.push_back({{"image_id", report.image_ids[i]}, {"iou", report.per_image_iou.at(i)}});
  }
  json doc = {
      {"method", report.method},
      {"config", report.resolved_config},
      {"partition",
       {{"client_sizes", report.client_sizes}, {"mean_client_entropy", report.partition_entropy}}},
      {"warnings", report.warnings},
      {"rounds", rounds},
      {"final", to_json(report.final_eval)},
      {"per_image", per_image},
  };
  if (report.discriminability) {
    const auto& d = *report.discriminability;
    json rows = json::array();
    for (std::size_t i = 0; i < d.distances.rows(); ++i) {
      rows.push_back(std::vector<double>(d.distances.row(i).begin(), d.distances.row(i).end()));
    }
    doc["discriminability"] = {{"distances", rows}, {"min", d.min_distance}, {"mean", d.mean_distance}};
  }
  if (report.global_centroids) {
    json rows = json::array();
    for (std::size_t c = 0; c < report.global_centroids->num_classes(); ++c) {
      const auto row = report.global_centroids->row(c);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    doc["global_centroids"] = rows;
  }
  return doc;
}

std::string rounds_csv(const RunReport& report) {
  std::string out =
      "round,client,steps,corr_loss,cluster_loss,prox_loss,moon_loss,centroid_shift,head_shift,client_miou,global_miou\n";
  for (const auto& r : report.rounds) {
    const auto global = r.eval ? csv_number(r.eval->global_miou) : std::string();
    if (r.clients.empty()) {
      const std::size_t count = r.eval ? r.eval->client_miou.size() : 0;
      for (std::size_t k = 0; k < count; ++k) {
        out += fmt::format("{},{},0,,,,,,,{},{}\n", r.round, k, csv_number(r.eval->client_miou[k]), global);
      }
      continue;
    }
    for (std::size_t i = 0; i < r.clients.size(); ++i) {
      const auto& c = r.clients[i];
      const auto k = static_cast<std::size_t>(c.client_id);
      const auto client = r.eval && k < r.eval->client_miou.size() ? csv_number(r.eval->client_miou[k]) : std::string();
      out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.round, c.client_id, c.steps, csv_number(c.corr_loss),
                         csv_number(c.cluster_loss), csv_number(c.prox_loss), csv_number(c.moon_loss),
                         csv_number(r.centroid_shift[i]), csv_number(r.head_shift[i]), client, global);
    }
  }
  return out;
}

std::string per_image_csv(const RunReport& report) {
  std::string out = "image_id,method,iou\n";
  for (std::size_t i = 0; i < report.image_ids.size(); ++i) {
    out += fmt::format("{},{},{}\n", csv_field(report.image_ids[i]), csv_field(report.method),
                       csv_number(report.per_image_iou[i]));
  }
  return out;
}

std::string audit_jsonl(const RunReport& report) {
  std::string out;
  for (const auto& r : report.rounds) {
    if (r.audit) out += to_json(*r.audit).dump() + "\n";
  }
  return out;
}

void write_run_outputs(const std::filesystem::path& dir, const RunReport& report,
                       const std::optional<std::string>& generated_at) {
  std::filesystem::create_directories(dir);
  auto doc = to_json(report);
  if (generated_at) doc[kTimestampField] = *generated_at;
  write_text(dir / "resolved_config.json", report.resolved_config.dump(2) + "\n");
  write_text(dir / "report.json", doc.dump(2) + "\n");
  write_text(dir / "rounds.csv", rounds_csv(report));
  write_text(dir / "per_image.csv", per_image_csv(report));
  write_text(dir / "audit.jsonl", audit_jsonl(report));
}

std::vector<AblationVariant> default_ablation(const AggregationPolicy& base) {
  std::vector<AblationVariant> rows;
  auto add = [&](Strategy s, bool w, bool e, bool c) {
    AggregationPolicy p = base;
    p.strategy = s;
    p.weighted = w;
    p.aggregate_encoder = e;
    p.aggregate_centroids = c;
    rows.push_back({method_label(p), p});
  };
  add(Strategy::FedAvg, false, false, false);
  add(Strategy::FedAvg, false, true, false);
  add(Strategy::FedAvg, false, false, true);
  add(Strategy::FedAvg, false, true, true);
  add(Strategy::FedAvg, true, true, false);
  add(Strategy::FedAvg, true, false, true);
  add(Strategy::FedAvg, true, true, true);
  for (auto s : {Strategy::FedCCKMeans, Strategy::FedCCMaximin}) {
    add(s, false, false, true);
    add(s, true, false, true);
    add(s, false, true, true);
    add(s, true, true, true);
  }
  return rows;
}

std::vector<AblationVariant> ablation_grid(const std::vector<Strategy>& strategies, bool with_weighting,
                                           const AggregationPolicy& base) {
  std::vector<AblationVariant> rows;
  for (auto s : strategies) {
    for (bool w : with_weighting ? std::vector<bool>{false, true} : std::vector<bool>{base.weighted}) {
      for (auto [e, c] : {std::pair{false, false}, {true, false}, {false, true}, {true, true}}) {
        AggregationPolicy p = base;
        p.strategy = s;
        p.weighted = w;
        p.aggregate_encoder = e;
        p.aggregate_centroids = c;
        rows.push_back({fmt::format("{}:{}", to_string(s), method_label(p)), p});
      }
    }
  }
  return rows;
}

AblationRow ablation_row(const AblationVariant& variant, const RunReport& report) {
  return {variant, report.final_eval.global_miou, report.final_eval.client_mean, report.final_eval.client_best,
          report.final_eval.client_worst};
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "method,strategy,W,E,C,global_miou,client_mean,client_best,client_worst\n";
  for (const auto& r : rows) {
    const auto& p = r.variant.policy;
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", csv_field(r.variant.name),
                       p.local_only() ? "none" : to_string(p.strategy), int(p.weighted), int(p.aggregate_encoder),
                       int(p.aggregate_centroids), csv_number(r.global_miou), csv_number(r.client_mean),
                       csv_number(r.client_best), csv_number(r.client_worst));
  }
  return out;
}

PerImageSeries read_per_image_series(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / "report.json" : path;
  std::ifstream in(file);
  if (!in) throw DataError(fmt::format("cannot read report {}", file.string()));
  try {
    const auto doc = json::parse(in);
    PerImageSeries series;
    series.method = doc.at("method").get<std::string>();
    for (const auto& entry : doc.at("per_image")) {
      series.image_ids.push_back(entry.at("image_id").get<std::string>());
      series.iou.push_back(entry.at("iou").get<double>());
    }
    return series;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("report {} lacks a per-image series: {}", file.string(), e.what()));
  }
}

Comparison compare_series(const PerImageSeries& a, const PerImageSeries& b) {
  std::map<std::string, double> lookup;
  for (std::size_t i = 0; i < b.image_ids.size(); ++i) lookup[b.image_ids[i]] = b.iou[i];
  if (lookup.size() != b.image_ids.size() || a.image_ids.size() != b.image_ids.size()) {
    throw DataError("reports cover different image sets");
  }
  std::vector<double> xa, xb;
  for (std::size_t i = 0; i < a.image_ids.size(); ++i) {
    const auto it = lookup.find(a.image_ids[i]);
    if (it == lookup.end()) throw DataError(fmt::format("image {} missing from the second report", a.image_ids[i]));
    xa.push_back(a.iou[i]);
    xb.push_back(it->second);
  }
  return {a.method, b.method, paired_ttest(xa, xb), wilcoxon_signed_rank(xa, xb)};
}

json to_json(const Comparison& c) {
  return {{"method_a", c.method_a},
          {"method_b", c.method_b},
          {"n", c.ttest.n},
          {"ttest",
           {{"mean_difference", c.ttest.mean_difference},
            {"t", c.ttest.t},
            {"p", number_or_null(c.ttest.p)},
            {"degenerate", c.ttest.degenerate}}},
          {"wilcoxon",
           {{"n_nonzero", c.wilcoxon.n},
            {"w", c.wilcoxon.w},
            {"w_plus", c.wilcoxon.w_plus},
            {"w_minus", c.wilcoxon.w_minus},
            {"p", number_or_null(c.wilcoxon.p)},
            {"exact", c.wilcoxon.exact},
            {"degenerate", c.wilcoxon.degenerate}}}};
}

}  // namespace fuss
