#pragma once

// Server-side combination of client updates: FedAvg over heads and
// centroids, and centroid clustering over the pooled prototypes (k-means
// consensus or maximin diversity selection).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuss/clustering.hpp"
#include "fuss/head.hpp"

namespace fuss {

struct ClientUpdate {
  int client_id = 0;
  HeadParams head;
  CentroidMatrix centroids;
  std::size_t sample_count = 1;
};

enum class Strategy { FedAvg, FedCCKMeans, FedCCMaximin };

std::string to_string(Strategy strategy);
Strategy strategy_from_string(const std::string& name);

struct AggregationPolicy {
  Strategy strategy = Strategy::FedAvg;
  bool weighted = true;             // W: alpha_k = N_k / N instead of 1 / K
  bool aggregate_encoder = true;    // E
  bool aggregate_centroids = true;  // C
  bool pin_first_pick = false;      // maximin starts at pool row 0
  std::size_t kmeans_restarts = 10;

  bool local_only() const { return !aggregate_encoder && !aggregate_centroids; }
};

/// Client weights in client-id order.
std::vector<double> client_weights(std::span<const ClientUpdate> updates, bool weighted);

HeadParams fedavg_heads(std::span<const ClientUpdate> updates, bool weighted);
CentroidMatrix fedavg_centroids(std::span<const ClientUpdate> updates, bool weighted);

/// All client centroid rows stacked in (client_id, row) order.
Matrix pool_centroids(std::span<const ClientUpdate> updates);

struct KMeansResult {
  CentroidMatrix centroids;             // rows ordered by descending population
  std::vector<std::size_t> assignment;  // pool row -> output row
  std::vector<double> population;       // weight mass per output row
  double objective = 0.0;               // weighted sum of squared distances
  int iterations = 0;
};

/// Weighted k-means (Euclidean) with k-means++ seeding and `restarts`
/// independent runs; the lowest objective wins. Empty `weights` means 1 per row.
KMeansResult fedcc_kmeans(const Matrix& pool, std::size_t num_classes, std::uint64_t seed,
                          std::span<const double> weights = {}, std::size_t restarts = 10);

/// Sum of squared distances from rows to their assigned center.
double kmeans_objective(const Matrix& pool, const Matrix& centers, std::span<const std::size_t> assignment,
                        std::span<const double> weights = {});

struct MaximinResult {
  CentroidMatrix centroids;          // selected pool rows, in selection order
  std::vector<std::size_t> selected;  // pool indices
};

/// Greedy farthest-point selection. `first` fixes the starting row;
/// otherwise it is drawn uniformly from `seed`.
MaximinResult fedcc_maximin(const Matrix& pool, std::size_t num_classes, std::uint64_t seed,
                            std::optional<std::size_t> first = std::nullopt);

struct AggregateResult {
  std::optional<HeadParams> head;
  std::optional<CentroidMatrix> centroids;
};

/// Sorts by client id, then aggregates the head iff E and the centroids iff C.
AggregateResult aggregate(std::vector<ClientUpdate> updates, const AggregationPolicy& policy,
                          std::uint64_t round_seed);

double frobenius_distance(const Matrix& a, const Matrix& b);

// Wire format: one tensor file per head parameter plus centroids.fuss and a
// JSON manifest in a directory.
void write_update(const std::filesystem::path& dir, const ClientUpdate& update);
ClientUpdate read_update(const std::filesystem::path& dir);

struct AuditRecord {
  int round = 0;
  std::string strategy;
  std::vector<std::pair<int, std::size_t>> sample_counts;
  std::vector<std::optional<double>> centroid_shift_norms;  // ||M_k - M_global||_F per client
};

nlohmann::json to_json(const AuditRecord& record);

}  // namespace fuss
