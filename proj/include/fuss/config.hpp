#pragma once

// Declarative description of a federation run, read from and written to JSON.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "fuss/adam.hpp"
#include "fuss/aggregation.hpp"
#include "fuss/head.hpp"
#include "fuss/regularizers.hpp"
#include "fuss/synth_data.hpp"

namespace fuss {

inline constexpr int kConfigSchemaVersion = 1;

enum class DataSource { Synthetic, ExportManifest };

struct DataConfig {
  DataSource source = DataSource::Synthetic;
  std::string manifest;               // ExportManifest: path to the manifest JSON
  double validation_fraction = 0.25;  // ExportManifest: trailing share held out
  GeneratorSpec generators;
  std::size_t train_scenes = 64;
  std::size_t validation_scenes = 32;
  std::size_t height = 16;
  std::size_t width = 16;
  LayoutKind layout = LayoutKind::Rectangles;
  std::size_t max_rects = 2;
  std::size_t cell = 4;
  PartitionMode partition = PartitionMode::Dirichlet;
  std::size_t num_clients = 4;
  double alpha = 0.5;
  EmptyClientPolicy empty_client_policy = EmptyClientPolicy::Resample;
  int max_resamples = 10;
};

struct ModelConfig {
  std::size_t embed_dim = 8;
  std::optional<std::size_t> hidden_dim;  // unset: same as the input dim
  std::size_t num_clusters = 4;
  bool normalize_scores = false;
};

struct TrainingConfig {
  std::size_t rounds = 10;
  std::optional<std::size_t> local_steps;  // unset: one epoch of the largest client
  bool centralized = false;
  BatchSpec batch;
  double lambda = 0.1;
  AdamConfig corr_optimizer{5e-4, 0.9, 0.999, 1e-8};
  AdamConfig cluster_optimizer{5e-3, 0.9, 0.999, 1e-8};
};

struct EvaluationConfig {
  bool every_round = true;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;
  TrainingConfig training;
  AggregationPolicy aggregation;
  RegularizerConfig regularizer;
  EvaluationConfig evaluation;

  /// Keys present in the parsed document, used for provenance reporting.
  std::vector<std::string> supplied_keys;
};

/// Throws ConfigError naming the offending key for unknown keys, wrong
/// types and out-of-range values.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

void validate(const ExperimentConfig& config);

/// Fully resolved document including a `provenance` block; parsing it back
/// yields the same run.
nlohmann::json to_json(const ExperimentConfig& config);

HeadShape head_shape(const ExperimentConfig& config, std::size_t input_dim);

}  // namespace fuss
