#pragma once

// Round loop: clients train locally on their own scenes, the server
// aggregates the returned updates and broadcasts the result.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuss/aggregation.hpp"
#include "fuss/config.hpp"
#include "fuss/evaluation.hpp"
#include "fuss/regularizers.hpp"
#include "fuss/synth_data.hpp"

namespace fuss {

struct Dataset {
  std::vector<SyntheticScene> train;
  std::vector<SyntheticScene> validation;
  std::size_t num_classes = 0;  // truth label bound
};

/// Synthetic generation or export-manifest loading, per the data section.
Dataset load_dataset(const ExperimentConfig& config);

/// Scenes owned by one client together with their cached pooled and
/// row-normalized features. Reads are recorded for the privacy audit.
class ClientData {
 public:
  ClientData(int client_id, std::vector<std::size_t> scene_ids, std::span<const SyntheticScene> all);

  int client_id() const { return client_id_; }
  std::size_t size() const { return scenes_.size(); }
  std::size_t scene_id(std::size_t local) const { return scene_ids_[local]; }

  const FeatureMap& features(std::size_t local);
  const Matrix& unit_features(std::size_t local);
  std::span<const std::vector<double>> pooled() const { return pooled_; }

  /// Scene ids read so far, ascending.
  std::vector<std::size_t> accessed() const;

 private:
  int client_id_ = 0;
  std::vector<std::size_t> scene_ids_;
  std::vector<const SyntheticScene*> scenes_;
  std::vector<std::vector<double>> pooled_;
  std::vector<Matrix> unit_;
  std::vector<bool> touched_;
};

struct ClientState {
  int client_id = 0;
  HeadParams head;
  CentroidMatrix centroids;
  AdamState head_optimizer;
  AdamState centroid_optimizer;
  std::optional<HeadParams> previous_head;  // end of the last round, for the contrastive term
};

struct RoundPlan {
  int round = 1;
  std::size_t local_steps = 1;
  BatchSpec batch;
  double lambda = 0.1;
  bool normalize_scores = false;
  AdamConfig corr_optimizer;
  AdamConfig cluster_optimizer;
  RegularizerConfig regularizer;
};

struct LocalRoundLog {
  int client_id = 0;
  int round = 0;
  std::size_t steps = 0;
  double corr_loss = 0.0;     // means over steps
  double cluster_loss = 0.0;
  double prox_loss = 0.0;
  double moon_loss = 0.0;
  std::size_t moon_skipped = 0;
  std::size_t clamped_selections = 0;
};

struct LocalRoundResult {
  ClientUpdate update;
  LocalRoundLog log;
};

/// Installs whichever global components are given (their optimizer state is
/// reset), then runs plan.local_steps steps of correlation and cluster
/// updates. Throws NumericalError on a non-finite loss.
LocalRoundResult local_round(ClientState& state, ClientData& data, const RoundPlan& plan,
                             const HeadParams* global_head, const CentroidMatrix* global_centroids, Rng& rng);

/// Predicted masks for a model on a set of scenes.
std::vector<SegmentationMask> predict(const HeadParams& head, const CentroidMatrix& centroids,
                                      std::span<const SyntheticScene> scenes, bool normalize_scores);

IouReport evaluate_model(const HeadParams& head, const CentroidMatrix& centroids,
                         std::span<const SyntheticScene> scenes, std::size_t num_classes, bool normalize_scores);

struct EvalSummary {
  std::optional<double> global_miou;  // only when head and centroids are both aggregated
  std::vector<double> client_miou;    // per client model after broadcast
  double client_mean = 0.0;
  double client_best = 0.0;
  double client_worst = 0.0;
};

struct RoundRecord {
  int round = 0;  // 0 = initialization
  std::vector<LocalRoundLog> clients;
  std::vector<std::optional<double>> centroid_shift;  // ||M_k - M_global||_F
  std::vector<std::optional<double>> head_shift;      // ||theta_k - theta_global||
  std::optional<EvalSummary> eval;
  std::optional<AuditRecord> audit;
};

struct RunOptions {
  std::size_t threads = 1;                         // 0 = hardware concurrency
  std::optional<std::vector<int>> execution_order;  // sequential client order, for order tests
};

struct RunReport {
  nlohmann::json resolved_config;
  std::string method;
  std::vector<std::size_t> client_sizes;
  double partition_entropy = 0.0;
  std::vector<std::string> warnings;
  std::vector<RoundRecord> rounds;
  EvalSummary final_eval;
  std::vector<std::string> image_ids;
  std::vector<double> per_image_iou;
  std::optional<HeadParams> global_head;
  std::optional<CentroidMatrix> global_centroids;
  std::vector<HeadParams> client_heads;
  std::vector<CentroidMatrix> client_centroids;
  std::optional<DiscriminabilityReport> discriminability;
  std::vector<std::vector<std::size_t>> client_scenes;    // partition
  std::vector<std::vector<std::size_t>> client_accesses;  // audit
};

/// Short label such as "fedavg+fedcc_maximin[WEC]" or "local_only".
std::string method_label(const AggregationPolicy& policy);

/// Steps per round when local_steps is unset: one epoch of the largest client.
std::size_t auto_local_steps(std::span<const std::size_t> client_sizes, std::size_t query_count);

RunReport run_federation(const ExperimentConfig& config, const RunOptions& options = {});
RunReport run_federation(const ExperimentConfig& config, const Dataset& dataset, const RunOptions& options = {});

/// The config of the pooled-data reference run: one client, one round,
/// rounds x per-round steps of training, head and centroids both kept.
ExperimentConfig centralized_config(const ExperimentConfig& config, std::size_t train_scenes);

RunReport centralized_baseline(const ExperimentConfig& config, const RunOptions& options = {});
RunReport centralized_baseline(const ExperimentConfig& config, const Dataset& dataset, const RunOptions& options = {});

}  // namespace fuss
