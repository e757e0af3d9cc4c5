// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Built as a plain executable so it also runs outside ctest.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "fuss/aggregation.hpp"
#include "fuss/clustering.hpp"
#include "fuss/config.hpp"
#include "fuss/evaluation.hpp"
#include "fuss/federation.hpp"
#include "fuss/head.hpp"
#include "fuss/regularizers.hpp"
#include "fuss/report.hpp"
#include "fuss/synth_data.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace fuss;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& body) {
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, fmt::format("threw: {}", e.what())};
  }
  if (!out.pass) ++failures;
  fmt::print("{} {}: {}\n", out.pass ? "PASS" : "FAIL", name, out.detail);
  std::fflush(stdout);
}

fs::path synthetic_config_path() { return fs::path(FUSS_SOURCE_DIR) / "configs" / "synthetic.json"; }

// ---------------------------------------------------------------- gradients

HeadParams biased_head(HeadShape shape, Rng& rng) {
  auto p = HeadParams::random(shape, rng);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& v : p.tensor(HeadTensor::HiddenBias)) v = n(rng);
  for (auto& v : p.tensor(HeadTensor::OutputBias)) v = n(rng);
  return p;
}

HeadParams from_flat(HeadShape shape, std::span<const double> x) {
  HeadParams p(shape);
  std::copy(x.begin(), x.end(), p.flat().begin());
  return p;
}

Outcome gradient_suite() {
  constexpr int kInstances = 20;
  const auto start = Clock::now();
  double corr = 0, cluster = 0, prox = 0, moon = 0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int t = 0; t < kInstances; ++t) {
    Rng rng(derive_seed(1000, {static_cast<std::uint64_t>(t)}));
    const HeadShape s{6, 5, 3};
    const auto params = biased_head(s, rng);
    const auto q = oracle::random_map(2, 2, 6, rng), sup = oracle::random_map(2, 2, 6, rng);
    const double b = unit(rng);
    const auto g = corr_loss_grad(params, q, sup, b);
    const auto numeric = oracle::numeric_gradient(
        [&](std::span<const double> x) {
          const auto p = from_flat(s, x);
          return corr_loss(similarity_tensor(q, sup), similarity_tensor(forward(p, q), forward(p, sup)), b);
        },
        {params.flat().begin(), params.flat().end()});
    corr = std::max(corr, oracle::relative_error(g.grad.flat(), numeric));
  }

  for (int t = 0; t < kInstances; ++t) {
    Rng rng(derive_seed(2000, {static_cast<std::uint64_t>(t)}));
    const std::vector<FeatureMap> maps{oracle::random_map(2, 4, 4, rng), oracle::random_map(1, 3, 4, rng)};
    const auto m = CentroidMatrix::random(3, 4, rng);
    const double lambda = unit(rng);
    const auto assignments = cluster_loss(maps, m, lambda).assignments;
    const auto g = cluster_loss_grad(maps, assignments, m, lambda);
    const auto numeric = oracle::numeric_gradient(
        [&](std::span<const double> x) {
          return cluster_loss_with(maps, assignments, CentroidMatrix(Matrix(3, 4, {x.begin(), x.end()})), lambda);
        },
        {m.flat().begin(), m.flat().end()});
    cluster = std::max(cluster, oracle::relative_error(g.values(), numeric));
  }

  for (int t = 0; t < kInstances; ++t) {
    Rng rng(derive_seed(3000, {static_cast<std::uint64_t>(t)}));
    const HeadShape s{4, 3, 2};
    const auto local = HeadParams::random(s, rng), global = HeadParams::random(s, rng);
    const double mu = 0.01 + unit(rng);
    const auto term = fedprox_term(local, global, mu);
    const auto numeric = oracle::numeric_gradient(
        [&](std::span<const double> x) { return fedprox_term(from_flat(s, x), global, mu).loss; },
        {local.flat().begin(), local.flat().end()});
    prox = std::max(prox, oracle::relative_error(term.grad.flat(), numeric));
  }

  for (int t = 0; t < kInstances; ++t) {
    Rng rng(derive_seed(4000, {static_cast<std::uint64_t>(t)}));
    const auto z = oracle::random_vector(6, rng), zg = oracle::random_vector(6, rng), zp = oracle::random_vector(6, rng);
    const double tau = 0.1 + unit(rng);
    const auto term = fedmoon_term(z, zg, zp, tau);
    const auto numeric = oracle::numeric_gradient(
        [&](std::span<const double> x) { return fedmoon_term(x, zg, zp, tau).loss; }, z);
    moon = std::max(moon, oracle::relative_error(term.grad, numeric));
  }

  const double elapsed = seconds_since(start);
  const bool ok = corr < 1e-4 && cluster < 1e-4 && prox < 1e-4 && moon < 1e-4 && elapsed < 30.0;
  return {ok, fmt::format("{} instances each, max rel err corr {:.2e} cluster {:.2e} fedprox {:.2e} fedmoon {:.2e}, "
                          "{:.2f} s",
                          kInstances, corr, cluster, prox, moon, elapsed)};
}

// -------------------------------------------------------------- aggregation

ClientUpdate centroid_update(int id, const Matrix& rows, std::size_t count, HeadShape shape, Rng& rng) {
  ClientUpdate u;
  u.client_id = id;
  u.head = HeadParams::random(shape, rng);
  u.centroids = CentroidMatrix(rows);
  u.sample_count = count;
  return u;
}

double row_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Largest distance from any row of one set to its nearest row in the other,
// both directions.
double row_set_gap(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  auto one_way = [](const Matrix& x, const Matrix& y) {
    double worst = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double best = INFINITY;
      for (std::size_t j = 0; j < y.rows(); ++j) best = std::min(best, row_distance(x.row(i), y.row(j)));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(one_way(a, b), one_way(b, a));
}

Outcome aligned_equivalence() {
  constexpr int kSeeds = 50;
  double worst = 0;
  int mismatches = 0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(derive_seed(5000, {static_cast<std::uint64_t>(seed)}));
    const auto clients = std::uniform_int_distribution<int>(2, 6)(rng);
    const auto classes = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
    const auto dim = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    const auto shared = CentroidMatrix::random(classes, dim, rng).matrix();
    const HeadShape shape{4, 3, 2};
    std::vector<ClientUpdate> updates;
    for (int k = 0; k < clients; ++k)
      updates.push_back(centroid_update(k, shared, std::uniform_int_distribution<std::size_t>(1, 40)(rng), shape, rng));
    for (auto strategy : {Strategy::FedAvg, Strategy::FedCCKMeans, Strategy::FedCCMaximin}) {
      for (bool weighted : {false, true}) {
        AggregationPolicy policy;
        policy.strategy = strategy;
        policy.weighted = weighted;
        const auto out = aggregate(updates, policy, derive_seed(seed, {stream::kServer}));
        const double gap = row_set_gap(out.centroids->matrix(), shared);
        worst = std::max(worst, gap);
        if (!(gap <= 1e-9)) ++mismatches;
      }
    }
  }
  return {mismatches == 0, fmt::format("{} seeds x 3 strategies x W on/off, max row-set gap {:.2e}, {} mismatches",
                                       kSeeds, worst, mismatches)};
}

bool is_pool_row(std::span<const double> row, const Matrix& pool) {
  for (std::size_t i = 0; i < pool.rows(); ++i)
    if (std::equal(row.begin(), row.end(), pool.row(i).begin())) return true;
  return false;
}

Outcome misaligned_separation() {
  constexpr int kPools = 100;
  int violations = 0, foreign = 0, collapsed = 0, swapped_rows = 0;
  double margin = INFINITY;
  for (int seed = 0; seed < kPools; ++seed) {
    Rng rng(derive_seed(6000, {static_cast<std::uint64_t>(seed)}));
    const auto classes = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
    const auto dim = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    const auto rows = CentroidMatrix::random(classes, dim, rng).matrix();
    // Client 1 holds the same rows with one or more disjoint pairs exchanged.
    std::vector<std::size_t> order(classes), perm(classes);
    std::iota(order.begin(), order.end(), 0);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto swaps = std::uniform_int_distribution<std::size_t>(1, classes / 2)(rng);
    for (std::size_t i = 0; i < swaps; ++i) std::swap(perm[order[2 * i]], perm[order[2 * i + 1]]);
    Matrix swapped(classes, dim);
    for (std::size_t c = 0; c < classes; ++c)
      std::copy(rows.row(perm[c]).begin(), rows.row(perm[c]).end(), swapped.row(c).begin());

    const HeadShape shape{4, 3, 2};
    const std::size_t count = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
    const std::vector<ClientUpdate> updates{centroid_update(0, rows, count, shape, rng),
                                            centroid_update(1, swapped, count, shape, rng)};
    AggregationPolicy avg, maximin;
    maximin.strategy = Strategy::FedCCMaximin;
    const auto round_seed = derive_seed(seed, {stream::kServer});
    const auto averaged = *aggregate(updates, avg, round_seed).centroids;
    const auto selected = *aggregate(updates, maximin, round_seed).centroids;

    const auto pool = pool_centroids(updates);
    for (std::size_t c = 0; c < classes; ++c) {
      if (!is_pool_row(selected.row(c), pool)) ++foreign;
      if (perm[c] != c) {
        ++swapped_rows;
        std::vector<double> mid(dim);
        for (std::size_t j = 0; j < dim; ++j) mid[j] = 0.5 * (rows(c, j) + rows(perm[c], j));
        if (row_distance(averaged.row(c), mid) < 1e-12) ++collapsed;
      }
    }
    const double d_max = discriminability(selected).min_distance;
    const double d_avg = discriminability(averaged).min_distance;
    margin = std::min(margin, d_max - d_avg);
    if (!(d_max >= d_avg)) ++violations;
  }
  return {violations == 0 && foreign == 0 && collapsed == swapped_rows,
          fmt::format("{} pools, {} violations, {} maximin rows outside the pool, {}/{} swapped FedAvg rows at midpoints, "
                      "min margin {:.3f}",
                      kPools, violations, foreign, collapsed, swapped_rows, margin)};
}

// ------------------------------------------------------------------ oracles

Outcome oracle_equivalences() {
  std::string detail;
  bool ok = true;

  {
    double worst = 0;
    int cases = 0;
    std::mt19937_64 rng(71);
    for (std::size_t n = 2; n <= 8; ++n) {
      for (int t = 0; t < 10; ++t, ++cases) {
        const auto x = oracle::random_vector(n, rng);
        const auto r = fedcc_kmeans(Matrix(n, 1, x), 2, static_cast<std::uint64_t>(cases));
        worst = std::max(worst, std::abs(r.objective - oracle::exhaustive_kmeans_1d(x, 2)));
      }
    }
    ok = ok && worst <= 1e-9;
    detail += fmt::format("k-means {} cases max gap {:.1e}; ", cases, worst);
  }

  {
    int cases = 0, wrong = 0;
    std::mt19937_64 rng(72);
    std::uniform_int_distribution<std::int64_t> count(0, 50);
    for (std::size_t n = 1; n <= 5; ++n) {
      for (int t = 0; t < 40; ++t, ++cases) {
        CountMatrix m(n, n);
        std::vector<std::vector<std::int64_t>> plain(n, std::vector<std::int64_t>(n));
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < n; ++c) m(r, c) = plain[r][c] = count(rng);
        if (matched_total(m, hungarian_match(m)) != oracle::best_permutation_total(plain)) ++wrong;
      }
    }
    ok = ok && wrong == 0;
    detail += fmt::format("Hungarian {} matrices up to 5x5, {} wrong; ", cases, wrong);
  }

  {
    double worst = 0;
    int cases = 0;
    std::mt19937_64 rng(73);
    for (std::size_t n = 1; n <= 12; ++n) {
      for (int t = 0; t < 8; ++t, ++cases) {
        std::vector<double> d(n), zero(n, 0.0);
        for (auto& v : d) {
          v = std::round(oracle::random_vector(1, rng)[0] * 4) / 4;
          if (v == 0) v = -0.25;
        }
        const auto r = wilcoxon_signed_rank(d, zero, WilcoxonMethod::Exact);
        const auto ranks = oracle::average_ranks(d);
        double w_plus = 0;
        for (std::size_t i = 0; i < n; ++i) w_plus += d[i] > 0 ? ranks[i] : 0;
        worst = std::max(worst, std::abs(r.p - oracle::sign_flip_p(ranks, w_plus)));
      }
    }
    ok = ok && worst <= 1e-9;
    detail += fmt::format("Wilcoxon {} cases n<=12 max gap {:.1e}; ", cases, worst);
  }

  {
    int cases = 0, wrong = 0;
    std::mt19937_64 rng(74);
    for (int t = 0; t < 50; ++t, ++cases) {
      const auto rows = std::uniform_int_distribution<std::size_t>(2, 24)(rng);
      const auto dim = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
      const auto k = std::uniform_int_distribution<std::size_t>(1, rows)(rng);
      const Matrix pool(rows, dim, oracle::random_vector(rows * dim, rng));
      const auto first = std::uniform_int_distribution<std::size_t>(0, rows - 1)(rng);
      if (fedcc_maximin(pool, k, 0, first).selected != oracle::greedy_maximin(pool, k, first)) ++wrong;
    }
    ok = ok && wrong == 0;
    detail += fmt::format("maximin {} pools, {} differ", cases, wrong);
  }
  return {ok, detail};
}

// --------------------------------------------------------------- end to end

struct EndToEnd {
  bool ran = false;
  RunReport federated;
  RunReport local_only;
};

PerImageSeries series_of(const RunReport& r) { return {r.method, r.image_ids, r.per_image_iou}; }

Outcome end_to_end(EndToEnd& out) {
  const auto config = load_config(synthetic_config_path());
  const auto& d = config.data;
  const bool setup = d.generators.num_classes == 4 && d.num_clients == 4 && d.alpha == 0.5 &&
                     config.training.rounds == 10 && d.partition == PartitionMode::Dirichlet &&
                     d.generators.spread == 0.05 && config.aggregation.strategy == Strategy::FedCCMaximin &&
                     config.aggregation.aggregate_encoder && config.aggregation.aggregate_centroids;
  const auto generators = make_generators(d.generators, derive_seed(config.seed, {stream::kGenerators}));
  const double max_cos = max_pairwise_cosine(generators);

  const auto start = Clock::now();
  const auto dataset = load_dataset(config);
  const auto central = centralized_baseline(config, dataset);
  out.federated = run_federation(config, dataset);
  auto local_config = config;
  local_config.aggregation.aggregate_encoder = false;
  local_config.aggregation.aggregate_centroids = false;
  out.local_only = run_federation(local_config, dataset);
  const auto rerun = run_federation(config, load_dataset(config));
  const double elapsed = seconds_since(start);
  out.ran = true;

  const double central_miou = central.final_eval.global_miou.value_or(central.final_eval.client_mean);
  const double fed_miou = out.federated.final_eval.global_miou.value_or(-1.0);
  const double local_mean = out.local_only.final_eval.client_mean;
  const bool identical = to_json(rerun).dump() == to_json(out.federated).dump();

  const bool a = central_miou >= 0.95, b = fed_miou >= 0.90, c = fed_miou >= local_mean;
  const bool ok = setup && max_cos < 0.1 && a && b && c && identical && elapsed < 300.0;
  return {ok, fmt::format("setup {} (max mean cos {:.3f}); (a) centralized {:.4f} {}; (b) {} {:.4f} {}; "
                          "(c) local-only mean {:.4f} {}; (d) reruns {}; {:.1f} s",
                          setup ? "ok" : "mismatch", max_cos, central_miou, a ? "ok" : "below 0.95",
                          out.federated.method, fed_miou, b ? "ok" : "below 0.90", local_mean,
                          c ? "ok" : "above federated", identical ? "bit-identical" : "differ", elapsed)};
}

// ----------------------------------------------------------------- ablation

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string field;
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

Outcome ablation_structure(const EndToEnd& e2e) {
  // Expected rows: (strategy, W, E, C) in table order.
  struct Row {
    const char* strategy;
    int w, e, c;
  };
  const std::vector<Row> expected{
      {"none", 0, 0, 0},          {"fedavg", 0, 1, 0},        {"fedavg", 0, 0, 1},        {"fedavg", 0, 1, 1},
      {"fedavg", 1, 1, 0},        {"fedavg", 1, 0, 1},        {"fedavg", 1, 1, 1},        {"fedcc_kmeans", 0, 0, 1},
      {"fedcc_kmeans", 1, 0, 1},  {"fedcc_kmeans", 0, 1, 1},  {"fedcc_kmeans", 1, 1, 1},  {"fedcc_maximin", 0, 0, 1},
      {"fedcc_maximin", 1, 0, 1}, {"fedcc_maximin", 0, 1, 1}, {"fedcc_maximin", 1, 1, 1}};

  const auto out = fs::temp_directory_path() / "fuss_acceptance_ablation";
  fs::remove_all(out);
  const auto cmd = fmt::format("\"{}\" ablate --config \"{}\" --out \"{}\" > /dev/null", FUSS_CLI_PATH,
                               synthetic_config_path().string(), out.string());
  const auto start = Clock::now();
  const int status = std::system(cmd.c_str());
  const double elapsed = seconds_since(start);
  if (status != 0) return {false, fmt::format("ablate exited with status {}", status)};

  std::ifstream in(out / "ablation.csv");
  std::string line;
  std::getline(in, line);
  if (line != "method,strategy,W,E,C,global_miou,client_mean,client_best,client_worst")
    return {false, "unexpected header: " + line};
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(split(line, ','));
  if (rows.size() != expected.size()) return {false, fmt::format("{} rows, expected {}", rows.size(), expected.size())};

  int bad = 0, spreads = 0, globals = 0;
  std::optional<double> cli_wec_maximin;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& x = expected[i];
    if (r.size() != 9 || r[1] != x.strategy || r[2] != std::to_string(x.w) || r[3] != std::to_string(x.e) ||
        r[4] != std::to_string(x.c)) {
      ++bad;
      continue;
    }
    const bool has_global = x.e && x.c;
    const double mean = std::stod(r[6]), best = std::stod(r[7]), worst = std::stod(r[8]);
    if (has_global) {
      if (r[5].empty()) ++bad;
      ++globals;
    } else {
      // No global model: client mean with best/worst spread.
      if (!r[5].empty() || !(worst <= mean && mean <= best)) ++bad;
      ++spreads;
    }
    bool written = false;
    const auto prefix = fmt::format("{:02d}_", i);
    for (const auto& entry : fs::directory_iterator(out))
      if (entry.path().filename().string().starts_with(prefix) && fs::exists(entry.path() / "report.json"))
        written = true;
    if (!written) ++bad;
    if (std::string(x.strategy) == "fedcc_maximin" && x.w && x.e && x.c) cli_wec_maximin = std::stod(r[5]);
  }
  // The CLI row for the configured method must agree with the in-process run.
  bool consistent = true;
  if (e2e.ran && e2e.federated.final_eval.global_miou && cli_wec_maximin)
    consistent = std::abs(*cli_wec_maximin - *e2e.federated.final_eval.global_miou) < 1e-6;
  return {bad == 0 && consistent,
          fmt::format("{} rows ({} with global model, {} with client spreads), {} malformed, configured row {}, "
                      "{:.1f} s",
                      rows.size(), globals, spreads, bad, consistent ? "matches the direct run" : "disagrees",
                      elapsed)};
}

// --------------------------------------------------------------- statistics

bool in_unit(double p) { return p >= 0.0 && p <= 1.0; }

Outcome statistics(const EndToEnd& e2e) {
  if (!e2e.ran) return {false, "end-to-end runs unavailable"};
  const auto a = series_of(e2e.federated), b = series_of(e2e.local_only);
  const auto cmp = compare_series(a, b);
  const bool ranges = !cmp.ttest.degenerate && !cmp.wilcoxon.degenerate && in_unit(cmp.ttest.p) &&
                      in_unit(cmp.wilcoxon.p);
  const auto self = compare_series(a, a);
  const bool degenerate = self.ttest.degenerate && self.wilcoxon.degenerate && std::isnan(self.ttest.p) &&
                          std::isnan(self.wilcoxon.p);

  // Hand values: d = (1, 1, 1, -1) gives t = 1 on 3 df, P(|T| > 1) = 2/3 - sqrt(3)/(2 pi);
  // five positive differences give the exact two-sided p = 2 / 32; d = (a, 0, a) gives t = 2.
  const std::vector<double> d{1, 1, 1, -1}, zeros4(4, 0.0);
  const auto t = paired_ttest(d, zeros4);
  const double t_gap = std::max(std::abs(t.t - 1.0), std::abs(t.p - (2.0 / 3.0 - std::sqrt(3.0) / (2 * std::numbers::pi))));
  const std::vector<double> up{1, 2, 3, 4, 5}, zeros5(5, 0.0);
  const auto w = wilcoxon_signed_rank(up, zeros5);
  const double w_gap = std::max(std::abs(w.p - 0.0625), std::abs(w.w_plus - 15.0));
  const PerImageSeries x{"x", {"i0", "i1", "i2"}, {0.7, 0.5, 0.9}}, y{"y", {"i2", "i0", "i1"}, {0.6, 0.4, 0.5}};
  const double s_gap = std::abs(compare_series(x, y).ttest.t - 2.0);
  const double hand = std::max({t_gap, w_gap, s_gap});

  return {ranges && degenerate && hand <= 1e-9,
          fmt::format("federated vs local-only over {} images: t-test p {:.3g}, Wilcoxon p {:.3g}; "
                      "self-comparison {}; hand examples max gap {:.1e}",
                      a.iou.size(), cmp.ttest.p, cmp.wilcoxon.p, degenerate ? "degenerate" : "NOT degenerate", hand)};
}

// ----------------------------------------------------------- dirichlet skew

Outcome dirichlet_skew() {
  const auto base = load_config(synthetic_config_path());
  int increases = 0;
  double low_sum = 0, high_sum = 0;
  constexpr int kSeeds = 20;
  for (int seed = 0; seed < kSeeds; ++seed) {
    auto config = base;
    config.seed = static_cast<std::uint64_t>(seed);
    const auto dataset = load_dataset(config);
    std::vector<std::int32_t> dominant;
    for (const auto& scene : dataset.train) dominant.push_back(dominant_class(scene.truth));
    auto entropy = [&](double alpha) {
      PartitionSpec spec;
      spec.num_clients = config.data.num_clients;
      spec.alpha = alpha;
      spec.seed = derive_seed(config.seed, {stream::kPartition});
      return mean_client_entropy(dirichlet_partition(dominant, spec), dominant);
    };
    const double low = entropy(0.5), high = entropy(1e6);
    low_sum += low;
    high_sum += high;
    increases += high > low;
  }
  return {increases == kSeeds,
          fmt::format("entropy rose from alpha 0.5 to 1e6 on {}/{} seeds (means {:.3f} -> {:.3f} nats)", increases,
                      kSeeds, low_sum / kSeeds, high_sum / kSeeds)};
}

}  // namespace

int main() {
  EndToEnd e2e;
  report("gradient suite", gradient_suite);
  report("aligned-case equivalence", aligned_equivalence);
  report("misaligned-case separation", misaligned_separation);
  report("oracle equivalences", oracle_equivalences);
  report("end-to-end synthetic federation", [&] { return end_to_end(e2e); });
  report("ablation harness", [&] { return ablation_structure(e2e); });
  report("statistics", [&] { return statistics(e2e); });
  report("dirichlet skew", dirichlet_skew);
  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
