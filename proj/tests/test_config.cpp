#include <gtest/gtest.h>

#include "fuss/config.hpp"
#include "fuss/errors.hpp"

namespace fuss {
namespace {

using nlohmann::json;

json minimal() { return {{"schema_version", 1}}; }

std::string error_of(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

TEST(Config, MinimalUsesDefaults) {
  const auto c = parse_config(minimal());
  EXPECT_EQ(c.data.num_clients, 4u);
  EXPECT_EQ(c.model.embed_dim, 8u);
  EXPECT_EQ(c.training.rounds, 10u);
  EXPECT_EQ(c.training.batch.query_count, 8u);
  EXPECT_EQ(c.training.batch.nearest_neighbors, 1u);
  EXPECT_EQ(c.training.batch.random_supports, 5u);
  EXPECT_EQ(c.training.corr_optimizer.learning_rate, 5e-4);
  EXPECT_EQ(c.training.cluster_optimizer.learning_rate, 5e-3);
  EXPECT_FALSE(c.training.local_steps.has_value());
  EXPECT_EQ(head_shape(c, 32), (HeadShape{32, 32, 8}));
}

TEST(Config, RejectsUnknownKeysWithPath) {
  auto doc = minimal();
  doc["data"] = {{"partition", {{"clients", 3}}}};
  EXPECT_NE(error_of(doc).find("unknown key data.partition.clients"), std::string::npos);
  auto top = minimal();
  top["extra"] = 1;
  EXPECT_NE(error_of(top).find("unknown key extra"), std::string::npos);
}

TEST(Config, RejectsWrongTypesAndRanges) {
  auto doc = minimal();
  doc["training"] = {{"rounds", "ten"}};
  EXPECT_NE(error_of(doc).find("training.rounds"), std::string::npos);
  doc["training"] = {{"b", 1.5}};
  EXPECT_NE(error_of(doc).find("training.b"), std::string::npos);
  doc = minimal();
  doc["aggregation"] = {{"strategy", "median"}};
  EXPECT_FALSE(error_of(doc).empty());
  doc = minimal();
  doc["model"] = {{"embed_dim", 64}};
  EXPECT_NE(error_of(doc).find("embed_dim"), std::string::npos);
  EXPECT_FALSE(error_of(json{{"seed", 1}}).empty());
  EXPECT_FALSE(error_of(json{{"schema_version", 2}}).empty());
}

TEST(Config, ParsesEverySection) {
  const json doc = {
      {"schema_version", 1},
      {"seed", 42},
      {"data",
       {{"num_classes", 3},
        {"layout", "random_field"},
        {"partition", {{"mode", "silo"}, {"num_clients", 2}, {"empty_client_policy", "accept"}}}}},
      {"model", {{"hidden_dim", 12}, {"normalize_scores", true}}},
      {"training", {{"local_steps", 7}, {"pair_reduction", "sum"}, {"lambda", 0.5}}},
      {"aggregation", {{"strategy", "fedcc_kmeans"}, {"weighted", false}, {"encoder", false}}},
      {"regularizer", {{"kind", "fedmoon"}, {"tau", 0.2}}},
      {"evaluation", {{"every_round", false}}}};
  const auto c = parse_config(doc);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.data.generators.num_classes, 3u);
  EXPECT_EQ(c.data.layout, LayoutKind::RandomField);
  EXPECT_EQ(c.data.partition, PartitionMode::Silo);
  EXPECT_EQ(c.data.empty_client_policy, EmptyClientPolicy::Accept);
  EXPECT_EQ(c.model.hidden_dim, std::optional<std::size_t>(12));
  EXPECT_TRUE(c.model.normalize_scores);
  EXPECT_EQ(c.training.local_steps, std::optional<std::size_t>(7));
  EXPECT_EQ(c.training.batch.reduction, PairReduction::Sum);
  EXPECT_EQ(c.aggregation.strategy, Strategy::FedCCKMeans);
  EXPECT_FALSE(c.aggregation.weighted);
  EXPECT_FALSE(c.aggregation.aggregate_encoder);
  EXPECT_EQ(c.regularizer.kind, RegularizerKind::FedMoon);
  EXPECT_FALSE(c.evaluation.every_round);
}

TEST(Config, ResolvedDocumentRoundTrips) {
  auto doc = minimal();
  doc["training"] = {{"b", 0.4}, {"local_steps", 3}};
  const auto c = parse_config(doc);
  const auto resolved = to_json(c);
  EXPECT_EQ(resolved["provenance"]["training.b"], "supplied");
  EXPECT_EQ(resolved["provenance"]["training.lambda"], "non-paper default");
  EXPECT_EQ(resolved["provenance"]["training.lr_corr"], "paper value");
  EXPECT_EQ(resolved["provenance"]["training.query_count"], "paper value");
  const auto again = parse_config(resolved);
  auto a = to_json(again), b = resolved;
  a.erase("provenance");
  b.erase("provenance");
  EXPECT_EQ(a, b);
}

}  // namespace
}  // namespace fuss
