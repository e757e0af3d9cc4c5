#include "fuss/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <numeric>
#include <thread>

#include <fmt/core.h>

#include "fuss/errors.hpp"
#include "fuss/export_manifest.hpp"

namespace fuss {

Dataset load_dataset(const ExperimentConfig& config) {
  const auto& d = config.data;
  Dataset dataset;
  if (d.source == DataSource::Synthetic) {
    const auto generators = make_generators(d.generators, derive_seed(config.seed, {stream::kGenerators}));
    DatasetSpec spec{d.train_scenes, d.height, d.width, d.layout, d.max_rects, d.cell};
    dataset.train = generate_dataset(generators, spec, derive_seed(config.seed, {stream::kScenes}), "train_");
    spec.num_scenes = d.validation_scenes;
    dataset.validation = generate_dataset(generators, spec, derive_seed(config.seed, {stream::kValidation}), "val_");
    dataset.num_classes = d.generators.num_classes;
    return dataset;
  }
  auto scenes = load_exported_scenes(read_export_manifest(d.manifest));
  if (scenes.size() < 2) throw DataError("an export needs at least two scenes to split off validation");
  auto held = static_cast<std::size_t>(std::ceil(d.validation_fraction * static_cast<double>(scenes.size())));
  held = std::clamp<std::size_t>(held, 1, scenes.size() - 1);
  const auto split = scenes.size() - held;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    dataset.num_classes = std::max(dataset.num_classes, static_cast<std::size_t>(scenes[i].truth.label_bound()));
    (i < split ? dataset.train : dataset.validation).push_back(std::move(scenes[i]));
  }
  return dataset;
}

ClientData::ClientData(int client_id, std::vector<std::size_t> scene_ids, std::span<const SyntheticScene> all)
    : client_id_(client_id), scene_ids_(std::move(scene_ids)) {
  for (auto id : scene_ids_) {
    if (id >= all.size()) throw DataError(fmt::format("client {} assigned unknown scene {}", client_id_, id));
    scenes_.push_back(&all[id]);
    pooled_.push_back(mean_pool(all[id].features));
    unit_.push_back(normalize_rows(flatten(all[id].features)).unit);
  }
  touched_.assign(scenes_.size(), false);
}

const FeatureMap& ClientData::features(std::size_t local) {
  touched_.at(local) = true;
  return scenes_[local]->features;
}

const Matrix& ClientData::unit_features(std::size_t local) {
  touched_.at(local) = true;
  return unit_[local];
}

std::vector<std::size_t> ClientData::accessed() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < touched_.size(); ++i) {
    if (touched_[i]) out.push_back(scene_ids_[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::vector<double> pooled_outputs(const HeadBatch& batch, std::size_t count, std::size_t& pixels) {
  std::vector<double> z(batch.output(0).cols(), 0.0);
  pixels = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& out = batch.output(i);
    for (std::size_t r = 0; r < out.rows(); ++r) {
      for (std::size_t c = 0; c < out.cols(); ++c) z[c] += out(r, c);
    }
    pixels += out.rows();
  }
  for (auto& v : z) v /= static_cast<double>(pixels);
  return z;
}

std::vector<double> pooled_forward(const HeadParams& head, std::span<const FeatureMap* const> inputs) {
  std::vector<double> z(head.shape().output_dim, 0.0);
  std::size_t pixels = 0;
  for (const auto* input : inputs) {
    const auto out = forward(head, *input);
    for (std::size_t p = 0; p < out.pixels(); ++p) {
      const auto px = out.pixel(p);
      for (std::size_t c = 0; c < z.size(); ++c) z[c] += px[c];
    }
    pixels += out.pixels();
  }
  for (auto& v : z) v /= static_cast<double>(pixels);
  return z;
}

[[noreturn]] void numerical_failure(const LocalRoundLog& log, std::size_t step, const char* what) {
  throw NumericalError(
      fmt::format("client {} round {} step {}: non-finite {}", log.client_id, log.round, step + 1, what));
}

}  // namespace

LocalRoundResult local_round(ClientState& state, ClientData& data, const RoundPlan& plan,
                             const HeadParams* global_head, const CentroidMatrix* global_centroids, Rng& rng) {
  if (global_head) {
    if (!(global_head->shape() == state.head.shape())) throw ProtocolError("global head shape differs from the client's");
    state.head = *global_head;
    state.head_optimizer = AdamState(state.head.size(), plan.corr_optimizer);
  }
  if (global_centroids) {
    if (global_centroids->num_classes() != state.centroids.num_classes() ||
        global_centroids->dim() != state.centroids.dim()) {
      throw ProtocolError("global centroid shape differs from the client's");
    }
    state.centroids = *global_centroids;
    state.centroid_optimizer = AdamState(state.centroids.flat().size(), plan.cluster_optimizer);
  }
  if (state.head_optimizer.size() != state.head.size()) {
    state.head_optimizer = AdamState(state.head.size(), plan.corr_optimizer);
  }
  if (state.centroid_optimizer.size() != state.centroids.flat().size()) {
    state.centroid_optimizer = AdamState(state.centroids.flat().size(), plan.cluster_optimizer);
  }

  LocalRoundResult result;
  auto& log = result.log;
  log.client_id = state.client_id;
  log.round = plan.round;

  const std::size_t n = data.size();
  const HeadParams anchor = state.head;
  const auto kind = plan.regularizer.kind;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;
  for (std::size_t step = 0; step < plan.local_steps && n > 0; ++step) {
    if (cursor >= n) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::size_t take = std::min(plan.batch.query_count, n - cursor);

    std::vector<std::size_t> members;
    std::vector<int> position(n, -1);
    auto add = [&](std::size_t local) {
      if (position[local] < 0) {
        position[local] = static_cast<int>(members.size());
        members.push_back(local);
      }
      return static_cast<std::size_t>(position[local]);
    };
    for (std::size_t i = 0; i < take; ++i) add(order[cursor + i]);
    std::vector<CorrPair> pairs;
    for (std::size_t i = 0; i < take; ++i) {
      const auto query = order[cursor + i];
      const auto selection = select_supports(query, data.pooled(), plan.batch, rng);
      if (selection.clamped) ++log.clamped_selections;
      for (auto s : selection.supports) pairs.push_back({static_cast<std::size_t>(position[query]), add(s)});
    }
    cursor += take;

    std::vector<const FeatureMap*> inputs;
    std::vector<Matrix> units;
    for (auto m : members) {
      inputs.push_back(&data.features(m));
      units.push_back(data.unit_features(m));
    }
    HeadBatch batch(state.head, inputs);
    const double corr = accumulate_corr_loss(batch, pairs, plan.batch.b, plan.batch.reduction, units);
    if (!std::isfinite(corr)) numerical_failure(log, step, "correlation loss");
    double prox = 0.0, moon = 0.0;

    if (kind == RegularizerKind::FedMoon) {
      bool skipped = !state.previous_head;
      if (!skipped) {
        std::size_t pixels = 0;
        const auto z = pooled_outputs(batch, take, pixels);
        const std::span<const FeatureMap* const> queries(inputs.data(), take);
        const auto zg = pooled_forward(anchor, queries);
        const auto zp = pooled_forward(*state.previous_head, queries);
        const auto term = fedmoon_term(z, zg, zp, plan.regularizer.tau);
        skipped = term.skipped;
        if (!skipped) {
          moon = plan.regularizer.moon_weight * term.loss;
          const double scale = plan.regularizer.moon_weight / static_cast<double>(pixels);
          for (std::size_t i = 0; i < take; ++i) {
            auto& g = batch.output_grad(i);
            for (std::size_t r = 0; r < g.rows(); ++r) {
              for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += scale * term.grad[c];
            }
          }
        }
      }
      if (skipped) ++log.moon_skipped;
      if (!std::isfinite(moon)) numerical_failure(log, step, "contrastive loss");
    }

    HeadParams grad = batch.backward();
    if (kind == RegularizerKind::FedProx) {
      const auto term = fedprox_term(state.head, anchor, plan.regularizer.mu);
      prox = term.loss;
      auto g = grad.flat();
      const auto pg = term.grad.flat();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += pg[i];
      if (!std::isfinite(prox)) numerical_failure(log, step, "proximal loss");
    }
    if (!grad.all_finite()) numerical_failure(log, step, "head gradient");

    // Cluster step on the detached pre-update embeddings of the queries.
    std::vector<FeatureMap> embeddings;
    for (std::size_t i = 0; i < take; ++i) embeddings.push_back(batch.output_map(i));
    const auto cluster = cluster_loss(embeddings, state.centroids, plan.lambda, plan.normalize_scores);
    if (!std::isfinite(cluster.loss)) numerical_failure(log, step, "cluster loss");
    const auto centroid_grad = cluster_loss_grad(embeddings, cluster.assignments, state.centroids, plan.lambda);

    adam_step(state.head.flat(), grad.flat(), state.head_optimizer);
    centroid_step(state.centroids, centroid_grad, state.centroid_optimizer);
    if (!state.head.all_finite()) numerical_failure(log, step, "head parameters");
    if (!state.centroids.all_finite()) numerical_failure(log, step, "centroids");

    ++log.steps;
    log.corr_loss += corr;
    log.cluster_loss += cluster.loss;
    log.prox_loss += prox;
    log.moon_loss += moon;
  }
  if (log.steps > 0) {
    const double s = static_cast<double>(log.steps);
    log.corr_loss /= s;
    log.cluster_loss /= s;
    log.prox_loss /= s;
    log.moon_loss /= s;
  }
  state.previous_head = state.head;
  result.update = ClientUpdate{state.client_id, state.head, state.centroids, n};
  return result;
}

std::vector<SegmentationMask> predict(const HeadParams& head, const CentroidMatrix& centroids,
                                      std::span<const SyntheticScene> scenes, bool normalize_scores) {
  std::vector<SegmentationMask> masks;
  masks.reserve(scenes.size());
  for (const auto& scene : scenes) masks.push_back(assign(score(forward(head, scene.features), centroids, normalize_scores)));
  return masks;
}

IouReport evaluate_model(const HeadParams& head, const CentroidMatrix& centroids,
                         std::span<const SyntheticScene> scenes, std::size_t num_classes, bool normalize_scores) {
  const auto pred = predict(head, centroids, scenes, normalize_scores);
  std::vector<SegmentationMask> truth;
  truth.reserve(scenes.size());
  for (const auto& scene : scenes) truth.push_back(scene.truth);
  return miou(pred, truth, centroids.num_classes(), num_classes);
}

std::string method_label(const AggregationPolicy& policy) {
  if (policy.local_only()) return "local_only";
  std::string flags;
  if (policy.weighted) flags += 'W';
  if (policy.aggregate_encoder) flags += 'E';
  if (policy.aggregate_centroids) flags += 'C';
  return fmt::format("{}[{}]", to_string(policy.strategy), flags);
}

std::size_t auto_local_steps(std::span<const std::size_t> client_sizes, std::size_t query_count) {
  std::size_t largest = 0;
  for (auto s : client_sizes) largest = std::max(largest, s);
  return (largest + query_count - 1) / query_count;
}

namespace {

struct ClientModels {
  std::vector<HeadParams> heads;
  std::vector<CentroidMatrix> centroids;
};

EvalSummary summarize(const ClientModels& models, const std::vector<bool>& active, const HeadParams* global_head,
                      const CentroidMatrix* global_centroids, const Dataset& dataset, bool normalize,
                      std::vector<double>* per_image) {
  EvalSummary summary;
  std::vector<double> image_sum(dataset.validation.size(), 0.0);
  std::size_t counted = 0;
  for (std::size_t k = 0; k < models.heads.size(); ++k) {
    if (!active[k]) {
      summary.client_miou.push_back(std::nan(""));
      continue;
    }
    const auto report = evaluate_model(models.heads[k], models.centroids[k], dataset.validation, dataset.num_classes, normalize);
    summary.client_miou.push_back(report.miou);
    for (std::size_t i = 0; i < image_sum.size(); ++i) image_sum[i] += report.per_image[i];
    ++counted;
  }
  std::vector<double> scores;
  for (std::size_t k = 0; k < summary.client_miou.size(); ++k) {
    if (active[k]) scores.push_back(summary.client_miou[k]);
  }
  if (!scores.empty()) {
    summary.client_mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    summary.client_best = *std::max_element(scores.begin(), scores.end());
    summary.client_worst = *std::min_element(scores.begin(), scores.end());
  }
  if (global_head && global_centroids) {
    const auto report = evaluate_model(*global_head, *global_centroids, dataset.validation, dataset.num_classes, normalize);
    summary.global_miou = report.miou;
    if (per_image) *per_image = report.per_image;
  } else if (per_image) {
    per_image->clear();
    for (double s : image_sum) per_image->push_back(counted ? s / static_cast<double>(counted) : 0.0);
  }
  return summary;
}

void run_clients(std::size_t count, const RunOptions& options, const std::function<void(std::size_t)>& work) {
  std::vector<std::exception_ptr> errors(count);
  auto guarded = [&](std::size_t k) {
    try {
      work(k);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  if (options.execution_order) {
    for (int k : *options.execution_order) {
      if (k < 0 || static_cast<std::size_t>(k) >= count) throw ConfigError("execution order names an unknown client");
      guarded(static_cast<std::size_t>(k));
    }
  } else {
    std::size_t threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : options.threads;
    threads = std::min(threads, count);
    if (threads <= 1) {
      for (std::size_t k = 0; k < count; ++k) guarded(k);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
          for (std::size_t k = next++; k < count; k = next++) guarded(k);
        });
      }
      for (auto& th : pool) th.join();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

RunReport run_federation(const ExperimentConfig& config, const RunOptions& options) {
  const auto dataset = load_dataset(config);
  return run_federation(config, dataset, options);
}

RunReport run_federation(const ExperimentConfig& config, const Dataset& dataset, const RunOptions& options) {
  if (config.training.centralized) return centralized_baseline(config, dataset, options);
  validate(config);
  if (dataset.train.empty() || dataset.validation.empty()) throw DataError("training and validation scenes are required");
  const std::size_t input_dim = dataset.train.front().features.dim();
  for (const auto* set : {&dataset.train, &dataset.validation}) {
    for (const auto& scene : *set) {
      if (scene.features.dim() != input_dim) throw DataError(fmt::format("scene {} has feature dim {}", scene.id, scene.features.dim()));
    }
  }
  const auto shape = head_shape(config, input_dim);
  if (shape.output_dim >= shape.input_dim) throw ConfigError("model.embed_dim must be smaller than the feature dim");
  const auto& policy = config.aggregation;

  RunReport report;
  report.resolved_config = to_json(config);
  report.method = method_label(policy);

  // Partition.
  PartitionSpec pspec{config.data.num_clients, config.data.alpha, config.data.partition,
                      derive_seed(config.seed, {stream::kPartition}), config.data.empty_client_policy,
                      config.data.max_resamples};
  std::vector<std::int32_t> dominant;
  std::vector<int> domains;
  for (const auto& scene : dataset.train) {
    dominant.push_back(dominant_class(scene.truth));
    domains.push_back(scene.domain_id);
  }
  const auto partition = pspec.mode == PartitionMode::Dirichlet ? dirichlet_partition(dominant, pspec)
                                                                 : silo_partition(domains, pspec);
  report.warnings = partition.warnings;
  report.partition_entropy = mean_client_entropy(partition, dominant);
  report.client_scenes = partition.clients;
  const std::size_t K = partition.clients.size();
  std::vector<bool> active(K);
  for (std::size_t k = 0; k < K; ++k) {
    report.client_sizes.push_back(partition.clients[k].size());
    active[k] = !partition.clients[k].empty();
    if (!active[k]) report.warnings.push_back(fmt::format("client {} holds no scenes and sits out", k));
  }
  const auto minimum_steps = auto_local_steps(report.client_sizes, config.training.batch.query_count);
  const auto steps = config.training.local_steps.value_or(minimum_steps);
  if (config.training.rounds > 0 && steps < minimum_steps) {
    throw ConfigError(fmt::format("training.local_steps {} is below one local epoch ({} steps)", steps, minimum_steps));
  }

  std::vector<ClientData> data;
  for (std::size_t k = 0; k < K; ++k) data.emplace_back(static_cast<int>(k), partition.clients[k], dataset.train);

  // Common seeded initialization, broadcast to every client.
  Rng init = make_rng(config.seed, {stream::kInit});
  std::optional<HeadParams> global_head = HeadParams::random(shape, init);
  std::optional<CentroidMatrix> global_centroids =
      CentroidMatrix::random(config.model.num_clusters, shape.output_dim, init);
  std::vector<ClientState> states(K);
  for (std::size_t k = 0; k < K; ++k) {
    states[k].client_id = static_cast<int>(k);
    states[k].head = *global_head;
    states[k].centroids = *global_centroids;
    states[k].head_optimizer = AdamState(global_head->size(), config.training.corr_optimizer);
    states[k].centroid_optimizer = AdamState(global_centroids->flat().size(), config.training.cluster_optimizer);
  }
  const bool has_global = policy.aggregate_encoder && policy.aggregate_centroids;
  const bool normalize = config.model.normalize_scores;

  ClientModels models;
  for (const auto& s : states) {
    models.heads.push_back(s.head);
    models.centroids.push_back(s.centroids);
  }
  {
    RoundRecord zero;
    zero.eval = summarize(models, active, has_global ? &*global_head : nullptr,
                          has_global ? &*global_centroids : nullptr, dataset, normalize, &report.per_image_iou);
    report.final_eval = *zero.eval;
    report.rounds.push_back(std::move(zero));
  }
  if (!has_global) {
    global_head.reset();
    global_centroids.reset();
  }

  RoundPlan plan;
  plan.local_steps = steps;
  plan.batch = config.training.batch;
  plan.lambda = config.training.lambda;
  plan.normalize_scores = normalize;
  plan.corr_optimizer = config.training.corr_optimizer;
  plan.cluster_optimizer = config.training.cluster_optimizer;
  plan.regularizer = config.regularizer;

  for (std::size_t r = 1; r <= config.training.rounds; ++r) {
    plan.round = static_cast<int>(r);
    const bool first = r == 1;
    std::vector<std::optional<LocalRoundResult>> results(K);
    run_clients(K, options, [&](std::size_t k) {
      if (!active[k]) return;
      Rng rng = make_rng(config.seed, {stream::kClient, k, r});
      const HeadParams* gh = !first && policy.aggregate_encoder ? &*global_head : nullptr;
      const CentroidMatrix* gc = !first && policy.aggregate_centroids ? &*global_centroids : nullptr;
      results[k] = local_round(states[k], data[k], plan, gh, gc, rng);
    });

    RoundRecord record;
    record.round = plan.round;
    std::vector<ClientUpdate> updates;
    for (std::size_t k = 0; k < K; ++k) {
      if (!results[k]) continue;
      record.clients.push_back(results[k]->log);
      updates.push_back(results[k]->update);
    }
    if (!policy.local_only()) {
      auto aggregated = aggregate(updates, policy, derive_seed(config.seed, {stream::kServer, r}));
      if (aggregated.head) global_head = std::move(aggregated.head);
      if (aggregated.centroids) global_centroids = std::move(aggregated.centroids);
    }

    AuditRecord audit;
    audit.round = plan.round;
    audit.strategy = report.method;
    for (const auto& u : updates) {
      audit.sample_counts.emplace_back(u.client_id, u.sample_count);
      const auto cs = policy.aggregate_centroids
                          ? std::optional<double>(frobenius_distance(u.centroids.matrix(), global_centroids->matrix()))
                          : std::nullopt;
      std::optional<double> hs;
      if (policy.aggregate_encoder) {
        double ss = 0.0;
        const auto a = u.head.flat();
        const auto b = global_head->flat();
        for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
        hs = std::sqrt(ss);
      }
      audit.centroid_shift_norms.push_back(cs);
      record.centroid_shift.push_back(cs);
      record.head_shift.push_back(hs);
    }
    record.audit = audit;

    // Each client's model after the broadcast.
    for (std::size_t k = 0; k < K; ++k) {
      models.heads[k] = policy.aggregate_encoder ? *global_head : states[k].head;
      models.centroids[k] = policy.aggregate_centroids ? *global_centroids : states[k].centroids;
    }
    if (config.evaluation.every_round || r == config.training.rounds) {
      record.eval = summarize(models, active, has_global ? &*global_head : nullptr,
                              has_global ? &*global_centroids : nullptr, dataset, normalize, &report.per_image_iou);
      report.final_eval = *record.eval;
    }
    report.rounds.push_back(std::move(record));
  }

  for (const auto& scene : dataset.validation) report.image_ids.push_back(scene.id);
  if (has_global) {
    report.global_head = global_head;
    report.global_centroids = global_centroids;
  }
  report.client_heads = models.heads;
  report.client_centroids = models.centroids;
  const CentroidMatrix& reported = policy.aggregate_centroids ? *global_centroids : models.centroids.front();
  if (reported.num_classes() >= 2) report.discriminability = discriminability(reported);
  for (const auto& d : data) report.client_accesses.push_back(d.accessed());
  return report;
}

ExperimentConfig centralized_config(const ExperimentConfig& config, std::size_t train_scenes) {
  ExperimentConfig c = config;
  const auto q = config.training.batch.query_count;
  const auto per_round = config.training.local_steps.value_or((train_scenes + q - 1) / q);
  c.training.centralized = false;
  c.training.local_steps = config.training.rounds * per_round;
  c.training.rounds = std::min<std::size_t>(config.training.rounds, 1);
  c.data.num_clients = 1;
  c.data.partition = PartitionMode::Dirichlet;
  c.aggregation.strategy = Strategy::FedAvg;
  c.aggregation.aggregate_encoder = true;
  c.aggregation.aggregate_centroids = true;
  c.regularizer.kind = RegularizerKind::None;
  return c;
}

RunReport centralized_baseline(const ExperimentConfig& config, const RunOptions& options) {
  const auto dataset = load_dataset(config);
  return centralized_baseline(config, dataset, options);
}

RunReport centralized_baseline(const ExperimentConfig& config, const Dataset& dataset, const RunOptions& options) {
  const auto c = centralized_config(config, dataset.train.size());
  auto report = run_federation(c, dataset, options);
  report.method = "centralized";
  return report;
}

}  // namespace fuss
