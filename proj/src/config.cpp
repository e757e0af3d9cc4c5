#include "fuss/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <fmt/core.h>

#include "fuss/errors.hpp"

namespace fuss {

using nlohmann::json;

namespace {

template <typename E>
using Names = std::vector<std::pair<E, const char*>>;

const Names<DataSource> kSources = {{DataSource::Synthetic, "synthetic"}, {DataSource::ExportManifest, "export_manifest"}};
const Names<LayoutKind> kLayouts = {{LayoutKind::Rectangles, "rectangles"}, {LayoutKind::RandomField, "random_field"}};
const Names<PartitionMode> kModes = {{PartitionMode::Dirichlet, "dirichlet"}, {PartitionMode::Silo, "silo"}};
const Names<EmptyClientPolicy> kPolicies = {{EmptyClientPolicy::Resample, "resample"},
                                            {EmptyClientPolicy::Accept, "accept"}};
const Names<PairReduction> kReductions = {{PairReduction::Mean, "mean"}, {PairReduction::Sum, "sum"}};
const Names<RegularizerKind> kRegularizers = {
    {RegularizerKind::None, "none"}, {RegularizerKind::FedProx, "fedprox"}, {RegularizerKind::FedMoon, "fedmoon"}};
const Names<Strategy> kStrategies = {{Strategy::FedAvg, "fedavg"},
                                     {Strategy::FedCCKMeans, "fedcc_kmeans"},
                                     {Strategy::FedCCMaximin, "fedcc_maximin"}};

template <typename E>
const char* name_of(const Names<E>& names, E value) {
  for (const auto& [v, n] : names) {
    if (v == value) return n;
  }
  return "?";
}

// Reads the keys of one object, remembering which were consumed so that
// leftovers can be reported as unknown.
class Reader {
 public:
  Reader(const json& obj, std::string path, std::vector<std::string>& supplied)
      : obj_(obj), path_(std::move(path)), supplied_(supplied) {
    if (!obj_.is_object()) throw ConfigError(fmt::format("{} must be an object", label()));
  }

  void uint(const char* key, std::size_t& out) {
    if (const auto* v = take(key)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0) throw type_error(key, "a nonnegative integer");
      out = v->get<std::size_t>();
    }
  }
  void uint64(const char* key, std::uint64_t& out) {
    if (const auto* v = take(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
        throw type_error(key, "a nonnegative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void integer(const char* key, int& out) {
    if (const auto* v = take(key)) {
      if (!v->is_number_integer()) throw type_error(key, "an integer");
      out = v->get<int>();
    }
  }
  void real(const char* key, double& out) {
    if (const auto* v = take(key)) {
      if (!v->is_number()) throw type_error(key, "a number");
      out = v->get<double>();
    }
  }
  void boolean(const char* key, bool& out) {
    if (const auto* v = take(key)) {
      if (!v->is_boolean()) throw type_error(key, "a boolean");
      out = v->get<bool>();
    }
  }
  void string(const char* key, std::string& out) {
    if (const auto* v = take(key)) {
      if (!v->is_string()) throw type_error(key, "a string");
      out = v->get<std::string>();
    }
  }
  void optional_uint(const char* key, std::optional<std::size_t>& out) {
    if (const auto* v = take(key)) {
      if (v->is_string() && v->get<std::string>() == "auto") {
        out.reset();
        return;
      }
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0) throw type_error(key, "\"auto\" or a nonnegative integer");
      out = v->get<std::size_t>();
    }
  }
  template <typename E>
  void choice(const char* key, const Names<E>& names, E& out) {
    if (const auto* v = take(key)) {
      if (v->is_string()) {
        for (const auto& [value, name] : names) {
          if (v->get<std::string>() == name) {
            out = value;
            return;
          }
        }
      }
      std::string options;
      for (const auto& [value, name] : names) options += fmt::format("{}\"{}\"", options.empty() ? "" : ", ", name);
      throw type_error(key, "one of " + options);
    }
  }
  bool has(const char* key) const { return obj_.contains(key); }
  Reader section(const char* key) {
    static const json empty = json::object();
    const auto* v = take(key);
    return Reader(v ? *v : empty, child(key), supplied_);
  }
  void skip(const char* key) { used_.insert(key); }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!used_.count(key)) throw ConfigError(fmt::format("unknown key {}", child(key.c_str())));
    }
  }

 private:
  const json* take(const char* key) {
    used_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return nullptr;
    supplied_.push_back(child(key));
    return &*it;
  }
  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string label() const { return path_.empty() ? "config" : path_; }
  ConfigError type_error(const char* key, const std::string& expected) const {
    return ConfigError(fmt::format("{} must be {}", child(key), expected));
  }

  const json& obj_;
  std::string path_;
  std::vector<std::string>& supplied_;
  std::set<std::string> used_;
};

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig cfg;
  Reader root(doc, "", cfg.supplied_keys);
  if (!doc.is_object() || !doc.contains("schema_version")) throw ConfigError("schema_version is required");
  int version = 0;
  root.integer("schema_version", version);
  if (version != kConfigSchemaVersion) {
    throw ConfigError(fmt::format("schema_version {} is not supported (expected {})", version, kConfigSchemaVersion));
  }
  root.uint64("seed", cfg.seed);
  root.skip("provenance");

  {
    auto d = root.section("data");
    auto& data = cfg.data;
    d.choice("source", kSources, data.source);
    d.string("manifest", data.manifest);
    d.real("validation_fraction", data.validation_fraction);
    d.uint("num_classes", data.generators.num_classes);
    d.uint("feature_dim", data.generators.dim);
    d.real("spread", data.generators.spread);
    d.real("separability_ceiling", data.generators.separability_ceiling);
    d.uint("num_domains", data.generators.num_domains);
    d.real("domain_offset_scale", data.generators.domain_offset_scale);
    d.uint("train_scenes", data.train_scenes);
    d.uint("validation_scenes", data.validation_scenes);
    d.uint("height", data.height);
    d.uint("width", data.width);
    d.choice("layout", kLayouts, data.layout);
    d.uint("max_rects", data.max_rects);
    d.uint("cell", data.cell);
    auto p = d.section("partition");
    p.choice("mode", kModes, data.partition);
    p.uint("num_clients", data.num_clients);
    p.real("alpha", data.alpha);
    p.choice("empty_client_policy", kPolicies, data.empty_client_policy);
    p.integer("max_resamples", data.max_resamples);
    p.finish();
    d.finish();
  }
  {
    auto m = root.section("model");
    m.uint("embed_dim", cfg.model.embed_dim);
    m.optional_uint("hidden_dim", cfg.model.hidden_dim);
    m.uint("num_clusters", cfg.model.num_clusters);
    m.boolean("normalize_scores", cfg.model.normalize_scores);
    m.finish();
  }
  {
    auto t = root.section("training");
    auto& tr = cfg.training;
    t.uint("rounds", tr.rounds);
    t.optional_uint("local_steps", tr.local_steps);
    t.boolean("centralized", tr.centralized);
    t.uint("query_count", tr.batch.query_count);
    t.uint("nearest_neighbors", tr.batch.nearest_neighbors);
    t.uint("random_supports", tr.batch.random_supports);
    t.real("b", tr.batch.b);
    t.choice("pair_reduction", kReductions, tr.batch.reduction);
    t.real("lambda", tr.lambda);
    t.real("lr_corr", tr.corr_optimizer.learning_rate);
    t.real("lr_clust", tr.cluster_optimizer.learning_rate);
    double beta1 = tr.corr_optimizer.beta1, beta2 = tr.corr_optimizer.beta2, eps = tr.corr_optimizer.epsilon;
    t.real("beta1", beta1);
    t.real("beta2", beta2);
    t.real("epsilon", eps);
    for (auto* opt : {&tr.corr_optimizer, &tr.cluster_optimizer}) {
      opt->beta1 = beta1;
      opt->beta2 = beta2;
      opt->epsilon = eps;
    }
    t.finish();
  }
  {
    auto a = root.section("aggregation");
    auto& ag = cfg.aggregation;
    a.choice("strategy", kStrategies, ag.strategy);
    a.boolean("weighted", ag.weighted);
    a.boolean("encoder", ag.aggregate_encoder);
    a.boolean("centroids", ag.aggregate_centroids);
    a.boolean("pin_first_pick", ag.pin_first_pick);
    a.uint("kmeans_restarts", ag.kmeans_restarts);
    a.finish();
  }
  {
    auto r = root.section("regularizer");
    r.choice("kind", kRegularizers, cfg.regularizer.kind);
    r.real("mu", cfg.regularizer.mu);
    r.real("tau", cfg.regularizer.tau);
    r.real("moon_weight", cfg.regularizer.moon_weight);
    r.finish();
  }
  {
    auto e = root.section("evaluation");
    e.boolean("every_round", cfg.evaluation.every_round);
    e.finish();
  }
  root.finish();
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config {} is not valid JSON: {}", path.string(), e.what()));
  }
  return parse_config(doc);
}

void validate(const ExperimentConfig& cfg) {
  auto require = [](bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
  };
  const auto& d = cfg.data;
  require(d.num_clients >= 1, "data.partition.num_clients must be at least 1");
  require(d.alpha > 0.0, "data.partition.alpha must be positive");
  require(d.max_resamples >= 0, "data.partition.max_resamples must be nonnegative");
  if (d.source == DataSource::Synthetic) {
    require(d.generators.num_classes >= 1, "data.num_classes must be at least 1");
    require(d.generators.dim >= 1, "data.feature_dim must be at least 1");
    require(d.generators.spread >= 0.0, "data.spread must be nonnegative");
    require(d.generators.num_domains >= 1, "data.num_domains must be at least 1");
    require(d.train_scenes >= 1, "data.train_scenes must be at least 1");
    require(d.validation_scenes >= 1, "data.validation_scenes must be at least 1");
    require(d.height >= 1 && d.width >= 1, "data.height and data.width must be positive");
    require(d.cell >= 1, "data.cell must be positive");
    require(cfg.model.embed_dim < d.generators.dim, "model.embed_dim must be smaller than data.feature_dim");
  } else {
    require(!d.manifest.empty(), "data.manifest is required for the export_manifest source");
    require(d.validation_fraction > 0.0 && d.validation_fraction < 1.0,
            "data.validation_fraction must lie strictly between 0 and 1");
  }
  require(cfg.model.embed_dim >= 1, "model.embed_dim must be at least 1");
  require(!cfg.model.hidden_dim || *cfg.model.hidden_dim >= 1, "model.hidden_dim must be at least 1");
  require(cfg.model.num_clusters >= 1, "model.num_clusters must be at least 1");
  const auto& t = cfg.training;
  require(t.batch.query_count >= 1, "training.query_count must be at least 1");
  require(t.batch.b >= 0.0 && t.batch.b <= 1.0, "training.b must lie in [0, 1]");
  require(t.lambda >= 0.0, "training.lambda must be nonnegative");
  require(t.corr_optimizer.learning_rate >= 0.0 && t.cluster_optimizer.learning_rate >= 0.0,
          "learning rates must be nonnegative");
  require(t.corr_optimizer.beta1 >= 0.0 && t.corr_optimizer.beta1 < 1.0, "training.beta1 must lie in [0, 1)");
  require(t.corr_optimizer.beta2 >= 0.0 && t.corr_optimizer.beta2 < 1.0, "training.beta2 must lie in [0, 1)");
  require(t.corr_optimizer.epsilon > 0.0, "training.epsilon must be positive");
  require(cfg.aggregation.kmeans_restarts >= 1, "aggregation.kmeans_restarts must be at least 1");
  validate(cfg.regularizer);
}

json to_json(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  const auto& t = cfg.training;
  json doc = {
      {"schema_version", kConfigSchemaVersion},
      {"seed", cfg.seed},
      {"data",
       {{"source", name_of(kSources, d.source)},
        {"manifest", d.manifest},
        {"validation_fraction", d.validation_fraction},
        {"num_classes", d.generators.num_classes},
        {"feature_dim", d.generators.dim},
        {"spread", d.generators.spread},
        {"separability_ceiling", d.generators.separability_ceiling},
        {"num_domains", d.generators.num_domains},
        {"domain_offset_scale", d.generators.domain_offset_scale},
        {"train_scenes", d.train_scenes},
        {"validation_scenes", d.validation_scenes},
        {"height", d.height},
        {"width", d.width},
        {"layout", name_of(kLayouts, d.layout)},
        {"max_rects", d.max_rects},
        {"cell", d.cell},
        {"partition",
         {{"mode", name_of(kModes, d.partition)},
          {"num_clients", d.num_clients},
          {"alpha", d.alpha},
          {"empty_client_policy", name_of(kPolicies, d.empty_client_policy)},
          {"max_resamples", d.max_resamples}}}}},
      {"model",
       {{"embed_dim", cfg.model.embed_dim},
        {"hidden_dim", cfg.model.hidden_dim ? json(*cfg.model.hidden_dim) : json("auto")},
        {"num_clusters", cfg.model.num_clusters},
        {"normalize_scores", cfg.model.normalize_scores}}},
      {"training",
       {{"rounds", t.rounds},
        {"local_steps", t.local_steps ? json(*t.local_steps) : json("auto")},
        {"centralized", t.centralized},
        {"query_count", t.batch.query_count},
        {"nearest_neighbors", t.batch.nearest_neighbors},
        {"random_supports", t.batch.random_supports},
        {"b", t.batch.b},
        {"pair_reduction", name_of(kReductions, t.batch.reduction)},
        {"lambda", t.lambda},
        {"lr_corr", t.corr_optimizer.learning_rate},
        {"lr_clust", t.cluster_optimizer.learning_rate},
        {"beta1", t.corr_optimizer.beta1},
        {"beta2", t.corr_optimizer.beta2},
        {"epsilon", t.corr_optimizer.epsilon}}},
      {"aggregation",
       {{"strategy", name_of(kStrategies, cfg.aggregation.strategy)},
        {"weighted", cfg.aggregation.weighted},
        {"encoder", cfg.aggregation.aggregate_encoder},
        {"centroids", cfg.aggregation.aggregate_centroids},
        {"pin_first_pick", cfg.aggregation.pin_first_pick},
        {"kmeans_restarts", cfg.aggregation.kmeans_restarts}}},
      {"regularizer",
       {{"kind", name_of(kRegularizers, cfg.regularizer.kind)},
        {"mu", cfg.regularizer.mu},
        {"tau", cfg.regularizer.tau},
        {"moon_weight", cfg.regularizer.moon_weight}}},
      {"evaluation", {{"every_round", cfg.evaluation.every_round}}},
  };

  // Values the literature run does not fix; each records whether the run
  // used the built-in default or a supplied value.
  static const std::vector<std::string> kNonPaper = {
      "data.feature_dim", "data.spread", "data.separability_ceiling", "data.height", "data.width",
      "model.embed_dim", "model.hidden_dim", "training.b", "training.lambda", "training.local_steps",
      "training.pair_reduction", "regularizer.mu", "regularizer.tau", "regularizer.moon_weight",
      "aggregation.kmeans_restarts"};
  static const std::vector<std::string> kPaper = {
      "training.lr_corr", "training.lr_clust", "training.rounds", "training.query_count", "training.nearest_neighbors",
      "training.random_supports", "data.partition.alpha"};
  json provenance = json::object();
  auto supplied = [&](const std::string& key) {
    return std::find(cfg.supplied_keys.begin(), cfg.supplied_keys.end(), key) != cfg.supplied_keys.end();
  };
  for (const auto& key : kNonPaper) provenance[key] = supplied(key) ? "supplied" : "non-paper default";
  for (const auto& key : kPaper) provenance[key] = supplied(key) ? "supplied" : "paper value";
  doc["provenance"] = provenance;
  return doc;
}

HeadShape head_shape(const ExperimentConfig& config, std::size_t input_dim) {
  return {input_dim, config.model.hidden_dim.value_or(input_dim), config.model.embed_dim};
}

}  // namespace fuss
