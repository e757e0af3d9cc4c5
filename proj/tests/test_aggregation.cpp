#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "fuss/aggregation.hpp"
#include "fuss/errors.hpp"
#include "oracles.hpp"

namespace fuss {
namespace {

ClientUpdate scalar_update(int id, double value, std::size_t n) {
  ClientUpdate u;
  u.client_id = id;
  u.head = HeadParams({1, 1, 1});
  std::fill(u.head.flat().begin(), u.head.flat().end(), value);
  u.centroids = CentroidMatrix(Matrix(1, 2, {value, 0}));
  u.sample_count = n;
  return u;
}

ClientUpdate matrix_update(int id, Matrix rows, std::size_t n = 10) {
  ClientUpdate u;
  u.client_id = id;
  u.head = HeadParams({2, 2, rows.cols()});
  u.centroids = CentroidMatrix(std::move(rows));
  u.sample_count = n;
  return u;
}

std::vector<std::vector<double>> sorted_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < m.rows(); ++r) rows.emplace_back(m.row(r).begin(), m.row(r).end());
  std::sort(rows.begin(), rows.end());
  return rows;
}

TEST(FedAvg, ScalarArithmetic) {
  const std::vector<ClientUpdate> equal{scalar_update(0, 1, 2), scalar_update(1, 3, 2)};
  EXPECT_DOUBLE_EQ(fedavg_heads(equal, true).flat()[0], 2.0);
  const std::vector<ClientUpdate> skew{scalar_update(0, 1, 1), scalar_update(1, 3, 3)};
  EXPECT_DOUBLE_EQ(fedavg_heads(skew, true).flat()[0], 2.5);
  EXPECT_DOUBLE_EQ(fedavg_heads(skew, false).flat()[0], 2.0);
  EXPECT_DOUBLE_EQ(fedavg_centroids(equal, false).row(0)[0], 2.0);
  EXPECT_EQ(client_weights(skew, true), (std::vector<double>{0.25, 0.75}));
}

TEST(FedAvg, IdempotentAndPermutationInvariant) {
  Rng rng(3);
  ClientUpdate a;
  a.head = HeadParams::random({3, 3, 2}, rng);
  a.centroids = CentroidMatrix::random(3, 2, rng);
  a.sample_count = 4;
  ClientUpdate b = a;
  b.client_id = 1;
  const std::vector<ClientUpdate> same{a, b};
  EXPECT_EQ(fedavg_heads(same, true), a.head);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(fedavg_centroids(same, true).flat()[i], a.centroids.flat()[i], 1e-15);

  ClientUpdate c = b;
  c.client_id = 2;
  c.head = HeadParams::random({3, 3, 2}, rng);
  c.sample_count = 9;
  const auto forward = aggregate({a, b, c}, {}, 1);
  const auto backward = aggregate({c, b, a}, {}, 1);
  EXPECT_EQ(*forward.head, *backward.head);
  EXPECT_EQ(*forward.centroids, *backward.centroids);
}

TEST(FedAvg, MisalignedRowsCollapseToMidpoint) {
  const Matrix x(2, 2, {1, 0, 0, 1}), y(2, 2, {0, 1, 1, 0});
  const std::vector<ClientUpdate> u{matrix_update(0, x), matrix_update(1, y)};
  const auto avg = fedavg_centroids(u, true);
  EXPECT_DOUBLE_EQ(avg.row(0)[0], 0.5);
  EXPECT_DOUBLE_EQ(avg.row(0)[1], 0.5);

  AggregationPolicy maximin;
  maximin.strategy = Strategy::FedCCMaximin;
  maximin.aggregate_encoder = false;
  maximin.pin_first_pick = true;
  const auto r = aggregate(u, maximin, 5);
  EXPECT_FALSE(r.head.has_value());
  EXPECT_EQ(sorted_rows(r.centroids->matrix()), sorted_rows(x));
}

TEST(FedAvg, ProtocolErrors) {
  EXPECT_THROW(aggregate({}, {}, 0), ProtocolError);
  auto a = scalar_update(0, 1, 1), b = scalar_update(0, 2, 1);
  EXPECT_THROW(aggregate({a, b}, {}, 0), ProtocolError);
  b.client_id = 1;
  b.sample_count = 0;
  EXPECT_THROW(aggregate({a, b}, {}, 0), ProtocolError);
  b.sample_count = 1;
  b.head = HeadParams({2, 1, 1});
  EXPECT_THROW(fedavg_heads(std::vector<ClientUpdate>{a, b}, true), ProtocolError);
  b = scalar_update(1, 2, 1);
  b.centroids = CentroidMatrix(Matrix(2, 2));
  EXPECT_THROW(aggregate({a, b}, {}, 0), ProtocolError);
}

TEST(Pool, OrderAndSingleClient) {
  const Matrix x(2, 1, {1, 2}), y(2, 1, {3, 4});
  const std::vector<ClientUpdate> u{matrix_update(0, x), matrix_update(1, y)};
  EXPECT_EQ(pool_centroids(u), Matrix(4, 1, {1, 2, 3, 4}));
  const std::vector<ClientUpdate> one{matrix_update(3, x)};
  EXPECT_EQ(pool_centroids(one), x);
}

TEST(KMeans, RecoversExactGroupMeans) {
  const Matrix pool(6, 2, {0, 0, 5, 5, 0, 0, 5, 5, -3, 4, -3, 4});
  const auto r = fedcc_kmeans(pool, 3, 1);
  EXPECT_EQ(sorted_rows(r.centroids.matrix()), (std::vector<std::vector<double>>{{-3, 4}, {0, 0}, {5, 5}}));
  EXPECT_NEAR(r.objective, 0.0, 1e-15);
}

TEST(KMeans, MatchesExhaustiveOracle1D) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 30; ++t) {
    const auto x = oracle::random_vector(8, rng);
    const auto r = fedcc_kmeans(Matrix(8, 1, x), 2, static_cast<std::uint64_t>(t));
    EXPECT_NEAR(r.objective, oracle::exhaustive_kmeans_1d(x, 2), 1e-9);
    EXPECT_NEAR(kmeans_objective(Matrix(8, 1, x), r.centroids.matrix(), r.assignment), r.objective, 1e-12);
  }
}

TEST(KMeans, PopulationOrderAndDeterminism) {
  const Matrix pool(5, 1, {0, 0.1, 0.2, 9, 9.1});
  const auto a = fedcc_kmeans(pool, 2, 4);
  EXPECT_NEAR(a.centroids.row(0)[0], 0.1, 1e-12);
  EXPECT_EQ(a.population, (std::vector<double>{3, 2}));
  const auto b = fedcc_kmeans(pool, 2, 4);
  EXPECT_EQ(a.centroids, b.centroids);
  const std::vector<double> w{1, 1, 1, 10, 10};
  EXPECT_NEAR(fedcc_kmeans(pool, 2, 4, w).centroids.row(0)[0], 9.05, 1e-12);
}

TEST(KMeans, ClientOrderInvariance) {
  Rng rng(8);
  std::vector<ClientUpdate> u;
  for (int k = 0; k < 4; ++k) {
    auto up = matrix_update(k, CentroidMatrix::random(3, 4, rng).matrix(), 5 + k);
    u.push_back(up);
  }
  AggregationPolicy policy;
  policy.strategy = Strategy::FedCCKMeans;
  auto reversed = u;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(*aggregate(u, policy, 11).centroids, *aggregate(reversed, policy, 11).centroids);
}

TEST(Maximin, HandCaseAndDegenerate) {
  const Matrix pool(3, 2, {0, 0, 1, 0, 0.1, 0});
  const auto r = fedcc_maximin(pool, 2, 0, 0);
  EXPECT_EQ(r.selected, (std::vector<std::size_t>{0, 2 - 1}));
  const Matrix same(3, 2, 1.5);
  const auto d = fedcc_maximin(same, 3, 5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(d.centroids.row(i)[0], 1.5);
}

TEST(Maximin, MatchesGreedyOracle) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 30; ++t) {
    const Matrix pool(10, 3, oracle::random_vector(30, rng));
    const std::size_t first = static_cast<std::size_t>(t % 10);
    const auto r = fedcc_maximin(pool, 3, 1, first);
    EXPECT_EQ(r.selected, oracle::greedy_maximin(pool, 3, first));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.centroids.row(i)[j], pool(r.selected[i], j));
  }
}

TEST(Maximin, SeededFirstPick) {
  std::mt19937_64 rng(2);
  const Matrix pool(12, 2, oracle::random_vector(24, rng));
  EXPECT_EQ(fedcc_maximin(pool, 4, 99).selected, fedcc_maximin(pool, 4, 99).selected);
}

TEST(Aggregate, AlignedStrategiesCoincide) {
  Rng rng(31);
  const auto shared = CentroidMatrix::random(4, 3, rng).matrix();
  std::vector<ClientUpdate> u;
  for (int k = 0; k < 3; ++k) u.push_back(matrix_update(k, shared, 3 + k));
  for (auto s : {Strategy::FedAvg, Strategy::FedCCKMeans, Strategy::FedCCMaximin}) {
    AggregationPolicy p;
    p.strategy = s;
    const auto got = sorted_rows(aggregate(u, p, 2).centroids->matrix());
    const auto want = sorted_rows(shared);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(got[r][c], want[r][c], 1e-9) << to_string(s);
  }
}

TEST(Aggregate, WeightingOnlyMattersForUnequalCounts) {
  const std::vector<ClientUpdate> equal{scalar_update(0, 1, 5), scalar_update(1, 4, 5)};
  AggregationPolicy w, nw;
  nw.weighted = false;
  EXPECT_EQ(*aggregate(equal, w, 0).head, *aggregate(equal, nw, 0).head);
  AggregationPolicy encoder_only;
  encoder_only.aggregate_centroids = false;
  const auto r = aggregate(equal, encoder_only, 0);
  EXPECT_TRUE(r.head.has_value());
  EXPECT_FALSE(r.centroids.has_value());
}

TEST(Strategy, NamesRoundTrip) {
  for (auto s : {Strategy::FedAvg, Strategy::FedCCKMeans, Strategy::FedCCMaximin})
    EXPECT_EQ(strategy_from_string(to_string(s)), s);
  EXPECT_THROW(strategy_from_string("median"), ConfigError);
}

TEST(WireFormat, UpdateRoundTrip) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "fuss_update_rt";
  fs::remove_all(dir);
  Rng rng(4);
  ClientUpdate u;
  u.client_id = 3;
  u.head = HeadParams::random({4, 4, 2}, rng);
  u.centroids = CentroidMatrix::random(3, 2, rng);
  u.sample_count = 17;
  write_update(dir, u);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "centroids.fuss"));
  EXPECT_TRUE(fs::exists(dir / "skip_weight.fuss"));
  const auto back = read_update(dir);
  EXPECT_EQ(back.client_id, 3);
  EXPECT_EQ(back.sample_count, 17u);
  EXPECT_EQ(back.head.shape(), u.head.shape());
  for (std::size_t i = 0; i < u.head.size(); ++i)
    EXPECT_EQ(back.head.flat()[i], static_cast<double>(static_cast<float>(u.head.flat()[i])));
  fs::remove(dir / "centroids.fuss");
  EXPECT_ANY_THROW(read_update(dir));
}

TEST(Audit, JsonShape) {
  AuditRecord rec{2, "fedavg", {{0, 5}, {1, 7}}, {0.5, std::nullopt}};
  const auto j = to_json(rec);
  EXPECT_EQ(j["round"], 2);
  EXPECT_EQ(j["strategy"], "fedavg");
  EXPECT_TRUE(j["centroid_shift_norms"][1].is_null());
}

}  // namespace
}  // namespace fuss
