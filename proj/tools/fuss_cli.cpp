// Command-line driver: run, ablate, compare, gen-data.

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "fuss/config.hpp"
#include "fuss/errors.hpp"
#include "fuss/federation.hpp"
#include "fuss/report.hpp"
#include "fuss/tensor_io.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                     tm.tm_hour, tm.tm_min, tm.tm_sec);
}

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

fuss::ExperimentConfig load(const Common& c) {
  auto config = fuss::load_config(c.config);
  if (c.seed) config.seed = *c.seed;
  return config;
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char ch : name) out += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
  return out;
}

int cmd_run(const Common& c) {
  const auto config = load(c);
  const auto report = fuss::run_federation(config, {c.threads, std::nullopt});
  fuss::write_run_outputs(c.out, report, utc_timestamp());
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  const auto& f = report.final_eval;
  if (f.global_miou) {
    fmt::print("{}: global mIoU {:.4f}\n", report.method, *f.global_miou);
  } else {
    fmt::print("{}: client mIoU mean {:.4f} (best {:.4f}, worst {:.4f})\n", report.method, f.client_mean,
               f.client_best, f.client_worst);
  }
  return 0;
}

int cmd_ablate(const Common& c, const std::vector<std::string>& strategies, bool weighting) {
  const auto config = load(c);
  std::vector<fuss::AblationVariant> variants;
  if (strategies.empty()) {
    variants = fuss::default_ablation(config.aggregation);
  } else {
    std::vector<fuss::Strategy> parsed;
    for (const auto& s : strategies) parsed.push_back(fuss::strategy_from_string(s));
    variants = fuss::ablation_grid(parsed, weighting, config.aggregation);
  }
  const auto dataset = fuss::load_dataset(config);
  std::filesystem::create_directories(c.out);
  std::vector<fuss::AblationRow> rows;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    auto sub = config;
    sub.aggregation = variants[i].policy;
    const auto report = fuss::run_federation(sub, dataset, {c.threads, std::nullopt});
    const auto dir = std::filesystem::path(c.out) / fmt::format("{:02d}_{}", i, sanitize(variants[i].name));
    fuss::write_run_outputs(dir, report, utc_timestamp());
    rows.push_back(fuss::ablation_row(variants[i], report));
    fmt::print("[{}/{}] {}\n", i + 1, variants.size(), variants[i].name);
  }
  std::ofstream(std::filesystem::path(c.out) / "ablation.csv") << fuss::ablation_csv(rows);
  return 0;
}

int cmd_compare(const std::string& a, const std::string& b, const std::string& out) {
  const auto sa = fuss::read_per_image_series(a);
  const auto sb = fuss::read_per_image_series(b);
  fuss::Comparison comparison;
  try {
    comparison = fuss::compare_series(sa, sb);
  } catch (const fuss::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  const auto text = fuss::to_json(comparison).dump(2) + "\n";
  if (!out.empty()) std::ofstream(out) << text;
  std::cout << text;
  return 0;
}

int cmd_gen_data(const Common& c) {
  const auto config = load(c);
  const auto dataset = fuss::load_dataset(config);
  const std::filesystem::path root(c.out);
  std::vector<std::string> paths;
  std::vector<std::int32_t> dominant;
  std::vector<int> domains;
  for (const auto& scene : dataset.train) {
    paths.push_back(fuss::save_scene(root / "train", scene).features.string());
    dominant.push_back(fuss::dominant_class(scene.truth));
    domains.push_back(scene.domain_id);
  }
  for (const auto& scene : dataset.validation) fuss::save_scene(root / "validation", scene);
  fuss::PartitionSpec spec{config.data.num_clients, config.data.alpha, config.data.partition,
                           fuss::derive_seed(config.seed, {fuss::stream::kPartition}),
                           config.data.empty_client_policy, config.data.max_resamples};
  const auto partition = config.data.partition == fuss::PartitionMode::Dirichlet
                             ? fuss::dirichlet_partition(dominant, spec)
                             : fuss::silo_partition(domains, spec);
  std::ofstream(root / "partition.json") << fuss::partition_manifest(partition, paths).dump(2) << '\n';
  fmt::print("wrote {} training and {} validation scenes to {}\n", dataset.train.size(), dataset.validation.size(),
             root.string());
  return 0;
}

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--threads", c.threads, "client worker threads, 0 = auto");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated unsupervised segmentation simulator"};
  app.require_subcommand(1);

  Common run_opts, ablate_opts, gen_opts;
  auto* run = app.add_subcommand("run", "train one federation and write its report");
  add_common(run, run_opts);

  auto* ablate = app.add_subcommand("ablate", "sweep W/E/C aggregation settings");
  add_common(ablate, ablate_opts);
  std::vector<std::string> strategies;
  bool weighting = false;
  ablate->add_option("--strategies", strategies, "grid over these strategies instead of the default table")
      ->delimiter(',');
  ablate->add_flag("--weighting", weighting, "include W on/off in the grid");

  auto* compare = app.add_subcommand("compare", "paired tests between two reports");
  std::string report_a, report_b, compare_out;
  compare->add_option("report_a", report_a, "first report.json or run directory")->required();
  compare->add_option("report_b", report_b, "second report.json or run directory")->required();
  compare->add_option("--out", compare_out, "also write the result here");

  auto* gen = app.add_subcommand("gen-data", "write the configured scenes and partition to disk");
  add_common(gen, gen_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*ablate) return cmd_ablate(ablate_opts, strategies, weighting);
    if (*compare) return cmd_compare(report_a, report_b, compare_out);
    if (*gen) return cmd_gen_data(gen_opts);
  } catch (const fuss::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
