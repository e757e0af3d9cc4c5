#include "fuss/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/core.h>

#include "fuss/errors.hpp"
#include "fuss/tensor_io.hpp"

namespace fuss {

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::FedAvg: return "fedavg";
    case Strategy::FedCCKMeans: return "fedcc_kmeans";
    case Strategy::FedCCMaximin: return "fedcc_maximin";
  }
  return "unknown";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "fedavg") return Strategy::FedAvg;
  if (name == "fedcc_kmeans") return Strategy::FedCCKMeans;
  if (name == "fedcc_maximin") return Strategy::FedCCMaximin;
  throw ConfigError(fmt::format("unknown aggregation strategy '{}'", name));
}

namespace {

// Indices of `updates` sorted by client id; rejects empty and duplicate ids.
std::vector<std::size_t> canonical_order(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw ProtocolError("no client updates to aggregate");
  std::vector<std::size_t> order(updates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return updates[a].client_id < updates[b].client_id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (updates[order[i]].client_id == updates[order[i - 1]].client_id) {
      throw ProtocolError(fmt::format("duplicate update from client {}", updates[order[i]].client_id));
    }
  }
  for (const auto& u : updates) {
    if (u.sample_count == 0) throw ProtocolError(fmt::format("client {} reported zero samples", u.client_id));
  }
  return order;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    total += d * d;
  }
  return total;
}

void weighted_sum(std::span<const ClientUpdate> updates, std::span<const std::size_t> order,
                  std::span<const double> weights, auto&& get, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto values = get(updates[order[i]]);
    if (values.size() != out.size()) {
      throw ProtocolError(fmt::format("client {} sent a differently shaped tensor", updates[order[i]].client_id));
    }
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += weights[i] * values[j];
  }
}

}  // namespace

std::vector<double> client_weights(std::span<const ClientUpdate> updates, bool weighted) {
  const auto order = canonical_order(updates);
  std::vector<double> weights(order.size());
  if (!weighted) {
    std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(order.size()));
    return weights;
  }
  double total = 0.0;
  for (const auto& u : updates) total += static_cast<double>(u.sample_count);
  for (std::size_t i = 0; i < order.size(); ++i) {
    weights[i] = static_cast<double>(updates[order[i]].sample_count) / total;
  }
  return weights;
}

HeadParams fedavg_heads(std::span<const ClientUpdate> updates, bool weighted) {
  const auto order = canonical_order(updates);
  const auto weights = client_weights(updates, weighted);
  const auto& shape = updates[order.front()].head.shape();
  for (const auto& u : updates) {
    if (!(u.head.shape() == shape)) throw ProtocolError(fmt::format("client {} head shape differs", u.client_id));
  }
  HeadParams out(shape);
  weighted_sum(updates, order, weights, [](const ClientUpdate& u) { return u.head.flat(); }, out.flat());
  return out;
}

CentroidMatrix fedavg_centroids(std::span<const ClientUpdate> updates, bool weighted) {
  const auto order = canonical_order(updates);
  const auto weights = client_weights(updates, weighted);
  const auto& first = updates[order.front()].centroids;
  for (const auto& u : updates) {
    if (u.centroids.num_classes() != first.num_classes() || u.centroids.dim() != first.dim()) {
      throw ProtocolError(fmt::format("client {} centroid shape differs", u.client_id));
    }
  }
  CentroidMatrix out(first.num_classes(), first.dim());
  weighted_sum(updates, order, weights, [](const ClientUpdate& u) { return u.centroids.flat(); }, out.flat());
  return out;
}

Matrix pool_centroids(std::span<const ClientUpdate> updates) {
  const auto order = canonical_order(updates);
  const auto& first = updates[order.front()].centroids;
  Matrix pool(order.size() * first.num_classes(), first.dim());
  std::size_t r = 0;
  for (auto i : order) {
    const auto& m = updates[i].centroids;
    if (m.num_classes() != first.num_classes() || m.dim() != first.dim()) {
      throw ProtocolError(fmt::format("client {} centroid shape differs", updates[i].client_id));
    }
    for (std::size_t c = 0; c < m.num_classes(); ++c, ++r) std::copy_n(m.row(c).begin(), m.dim(), pool.row(r).begin());
  }
  return pool;
}

namespace {

std::size_t nearest_center(std::span<const double> x, const Matrix& centers, double* best_d2 = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const double d = squared_distance(x, centers.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (best_d2) *best_d2 = best_d;
  return best;
}

struct LloydRun {
  Matrix centers;
  std::vector<std::size_t> assignment;
  double objective = 0.0;
  int iterations = 0;
};

LloydRun lloyd(const Matrix& pool, std::size_t k, std::span<const double> w, Rng& rng) {
  const std::size_t n = pool.rows();
  const std::size_t dim = pool.cols();
  Matrix centers(k, dim);

  // k-means++ seeding, D^2 * weight sampling.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  auto sample = [&](std::span<const double> mass) -> std::size_t {
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    if (!(total > 0.0)) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) return i;
      }
      return 0;
    }
    const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += mass[i];
      if (u < acc && mass[i] > 0.0) return i;
    }
    for (std::size_t i = n; i-- > 0;) {
      if (mass[i] > 0.0) return i;
    }
    return 0;
  };
  std::vector<double> mass(w.begin(), w.end());
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t pick = sample(mass);
    chosen[pick] = true;
    std::copy_n(pool.row(pick).begin(), dim, centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(pool.row(i), centers.row(c)));
      mass[i] = w[i] * d2[i];
    }
  }

  LloydRun run{std::move(centers), std::vector<std::size_t>(n, 0), 0.0, 0};
  constexpr int kMaxIterations = 100;
  constexpr double kTolerance = 1e-8;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    run.iterations = iter + 1;
    for (std::size_t i = 0; i < n; ++i) run.assignment[i] = nearest_center(pool.row(i), run.centers);
    Matrix next(k, dim);
    std::vector<double> cluster_mass(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = run.assignment[i];
      cluster_mass[c] += w[i];
      auto row = next.row(c);
      const auto x = pool.row(i);
      for (std::size_t d = 0; d < dim; ++d) row[d] += w[i] * x[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (cluster_mass[c] > 0.0) {
        for (auto& v : next.row(c)) v /= cluster_mass[c];
        continue;
      }
      // Empty cluster: reseed at the pool row farthest from its nearest center.
      std::copy_n(run.centers.row(c).begin(), dim, next.row(c).begin());
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        nearest_center(pool.row(i), next, &d);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      std::copy_n(pool.row(far).begin(), dim, next.row(c).begin());
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) shift = std::max(shift, std::sqrt(squared_distance(next.row(c), run.centers.row(c))));
    run.centers = std::move(next);
    if (shift < kTolerance) break;
  }
  for (std::size_t i = 0; i < n; ++i) run.assignment[i] = nearest_center(pool.row(i), run.centers);
  run.objective = kmeans_objective(pool, run.centers, run.assignment, w);
  return run;
}

}  // namespace

double kmeans_objective(const Matrix& pool, const Matrix& centers, std::span<const std::size_t> assignment,
                        std::span<const double> weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < pool.rows(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    total += w * squared_distance(pool.row(i), centers.row(assignment[i]));
  }
  return total;
}

KMeansResult fedcc_kmeans(const Matrix& pool, std::size_t num_classes, std::uint64_t seed,
                          std::span<const double> weights, std::size_t restarts) {
  if (num_classes == 0) throw ConfigError("k-means needs at least one cluster");
  if (pool.rows() < num_classes) {
    throw ConfigError(fmt::format("pool of {} rows cannot form {} clusters", pool.rows(), num_classes));
  }
  std::vector<double> w(weights.begin(), weights.end());
  if (w.empty()) w.assign(pool.rows(), 1.0);
  if (w.size() != pool.rows()) throw ConfigError("one weight per pooled row is required");

  std::optional<LloydRun> best;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
    Rng rng = make_rng(seed, {r});
    auto run = lloyd(pool, num_classes, w, rng);
    if (!best || run.objective < best->objective) best = std::move(run);
  }

  // Cluster means over the final assignment, rows by descending population.
  const std::size_t dim = pool.cols();
  std::vector<double> population(num_classes, 0.0);
  Matrix means(num_classes, dim);
  for (std::size_t i = 0; i < pool.rows(); ++i) {
    const auto c = best->assignment[i];
    population[c] += w[i];
    auto row = means.row(c);
    for (std::size_t d = 0; d < dim; ++d) row[d] += w[i] * pool(i, d);
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (population[c] > 0.0) {
      for (auto& v : means.row(c)) v /= population[c];
    } else {
      std::copy_n(best->centers.row(c).begin(), dim, means.row(c).begin());
    }
  }
  std::vector<std::size_t> order(num_classes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return population[a] > population[b]; });
  std::vector<std::size_t> rank(num_classes);
  KMeansResult result;
  Matrix sorted(num_classes, dim);
  for (std::size_t r = 0; r < num_classes; ++r) {
    rank[order[r]] = r;
    std::copy_n(means.row(order[r]).begin(), dim, sorted.row(r).begin());
    result.population.push_back(population[order[r]]);
  }
  for (auto c : best->assignment) result.assignment.push_back(rank[c]);
  result.objective = kmeans_objective(pool, sorted, result.assignment, w);
  result.iterations = best->iterations;
  result.centroids = CentroidMatrix(std::move(sorted));
  return result;
}

MaximinResult fedcc_maximin(const Matrix& pool, std::size_t num_classes, std::uint64_t seed,
                            std::optional<std::size_t> first) {
  if (num_classes == 0) throw ConfigError("maximin needs at least one selection");
  if (pool.rows() < num_classes) {
    throw ConfigError(fmt::format("pool of {} rows cannot supply {} prototypes", pool.rows(), num_classes));
  }
  std::size_t start = 0;
  if (first) {
    if (*first >= pool.rows()) throw ConfigError("maximin first pick outside the pool");
    start = *first;
  } else {
    Rng rng(seed);
    start = std::uniform_int_distribution<std::size_t>(0, pool.rows() - 1)(rng);
  }
  MaximinResult result;
  result.selected.push_back(start);
  std::vector<double> min_dist(pool.rows());
  for (std::size_t i = 0; i < pool.rows(); ++i) min_dist[i] = std::sqrt(squared_distance(pool.row(i), pool.row(start)));
  while (result.selected.size() < num_classes) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.rows(); ++i) {
      if (min_dist[i] > min_dist[best]) best = i;
    }
    result.selected.push_back(best);
    for (std::size_t i = 0; i < pool.rows(); ++i) {
      min_dist[i] = std::min(min_dist[i], std::sqrt(squared_distance(pool.row(i), pool.row(best))));
    }
  }
  Matrix rows(num_classes, pool.cols());
  for (std::size_t r = 0; r < num_classes; ++r) std::copy_n(pool.row(result.selected[r]).begin(), pool.cols(), rows.row(r).begin());
  result.centroids = CentroidMatrix(std::move(rows));
  return result;
}

AggregateResult aggregate(std::vector<ClientUpdate> updates, const AggregationPolicy& policy,
                          std::uint64_t round_seed) {
  if (updates.empty()) throw ProtocolError("no client updates to aggregate");
  std::stable_sort(updates.begin(), updates.end(),
                   [](const ClientUpdate& a, const ClientUpdate& b) { return a.client_id < b.client_id; });
  const auto num_classes = updates.front().centroids.num_classes();
  for (const auto& u : updates) {
    if (u.centroids.num_classes() != num_classes) {
      throw ProtocolError(fmt::format("client {} sent {} centroids, expected {}", u.client_id,
                                      u.centroids.num_classes(), num_classes));
    }
    if (!u.head.all_finite() || !u.centroids.all_finite()) {
      throw ProtocolError(fmt::format("client {} sent non-finite parameters", u.client_id));
    }
  }

  AggregateResult result;
  if (policy.aggregate_encoder) result.head = fedavg_heads(updates, policy.weighted);
  if (!policy.aggregate_centroids) return result;

  switch (policy.strategy) {
    case Strategy::FedAvg:
      result.centroids = fedavg_centroids(updates, policy.weighted);
      break;
    case Strategy::FedCCKMeans: {
      const auto pool = pool_centroids(updates);
      const auto weights = client_weights(updates, policy.weighted);
      std::vector<double> row_weights;
      for (auto w : weights) row_weights.insert(row_weights.end(), num_classes, w);
      result.centroids = fedcc_kmeans(pool, num_classes, round_seed, row_weights, policy.kmeans_restarts).centroids;
      break;
    }
    case Strategy::FedCCMaximin: {
      const auto pool = pool_centroids(updates);
      auto first = policy.pin_first_pick ? std::optional<std::size_t>(0) : std::nullopt;
      result.centroids = fedcc_maximin(pool, num_classes, round_seed, first).centroids;
      break;
    }
  }
  return result;
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ConfigError("distance between differently shaped matrices");
  return std::sqrt(squared_distance(a.values(), b.values()));
}

void write_update(const std::filesystem::path& dir, const ClientUpdate& update) {
  std::filesystem::create_directories(dir);
  nlohmann::json head_files = nlohmann::json::object();
  for (auto t : kHeadTensors) {
    const std::string name(head_tensor_name(t));
    const auto view = update.head.tensor(t);
    const auto dims = update.head.tensor_dims(t);
    TensorFile file{DType::Float32, {dims.begin(), dims.end()}, {view.begin(), view.end()}, {}};
    write_tensor_file(dir / (name + ".fuss"), file);
    head_files[name] = name + ".fuss";
  }
  write_tensor_file(dir / "centroids.fuss", to_tensor_file(update.centroids.matrix()));
  const auto& s = update.head.shape();
  nlohmann::json manifest = {
      {"format_version", kTensorFormatVersion},
      {"client_id", update.client_id},
      {"sample_count", update.sample_count},
      {"head_shape", {{"input_dim", s.input_dim}, {"hidden_dim", s.hidden_dim}, {"output_dim", s.output_dim}}},
      {"head", head_files},
      {"centroids", "centroids.fuss"},
  };
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

ClientUpdate read_update(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ProtocolError(fmt::format("no update manifest in {}", dir.string()));
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(fmt::format("malformed update manifest: {}", e.what()));
  }
  try {
    const auto& hs = manifest.at("head_shape");
    HeadShape shape{hs.at("input_dim").get<std::size_t>(), hs.at("hidden_dim").get<std::size_t>(),
                    hs.at("output_dim").get<std::size_t>()};
    ClientUpdate update;
    update.client_id = manifest.at("client_id").get<int>();
    update.sample_count = manifest.at("sample_count").get<std::size_t>();
    update.head = HeadParams(shape);
    for (auto t : kHeadTensors) {
      const auto file = read_tensor_file(dir / manifest.at("head").at(std::string(head_tensor_name(t))).get<std::string>());
      auto view = update.head.tensor(t);
      const auto dims = update.head.tensor_dims(t);
      if (file.dtype == DType::Int32 || file.reals.size() != view.size() ||
          !std::equal(dims.begin(), dims.end(), file.dims.begin(), file.dims.end())) {
        throw ProtocolError(fmt::format("tensor {} does not match the declared head shape", head_tensor_name(t)));
      }
      std::copy(file.reals.begin(), file.reals.end(), view.begin());
    }
    update.centroids = CentroidMatrix(matrix_from(read_tensor_file(dir / manifest.at("centroids").get<std::string>())));
    return update;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(fmt::format("incomplete update manifest: {}", e.what()));
  }
}

nlohmann::json to_json(const AuditRecord& record) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [client, n] : record.sample_counts) counts[std::to_string(client)] = n;
  nlohmann::json shifts = nlohmann::json::array();
  for (const auto& s : record.centroid_shift_norms) shifts.push_back(s ? nlohmann::json(*s) : nlohmann::json());
  return {{"round", record.round},
          {"strategy", record.strategy},
          {"sample_counts", counts},
          {"centroid_shift_norms", shifts}};
}

}  // namespace fuss
