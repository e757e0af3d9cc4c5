#include "fuss/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/core.h>

#include "fuss/errors.hpp"
#include "fuss/tensor_io.hpp"

namespace fuss {
namespace {

std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  double n = 0.0;
  while (n == 0.0) {
    for (auto& x : v) x = normal(rng);
    n = norm(v);
  }
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace

GeneratorSet make_generators(const GeneratorSpec& spec, std::uint64_t seed) {
  if (spec.num_classes == 0 || spec.dim == 0) throw ConfigError("generators need classes and a dimension");
  if (spec.spread < 0.0) throw ConfigError("within-class spread must be nonnegative");
  if (spec.num_domains == 0) throw ConfigError("at least one domain is required");

  Rng rng = make_rng(seed, {stream::kGenerators});
  GeneratorSet set;
  set.dim = spec.dim;
  constexpr int kMaxTries = 10000;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
      auto candidate = random_unit(spec.dim, rng);
      placed = std::all_of(set.classes.begin(), set.classes.end(), [&](const ClassGenerator& g) {
        return cosine_similarity(candidate, g.mean_direction) < spec.separability_ceiling;
      });
      if (placed) set.classes.push_back({std::move(candidate), spec.spread});
    }
    if (!placed) {
      throw ConfigError(fmt::format("could not place {} class means in {} dims below cosine {}",
                                    spec.num_classes, spec.dim, spec.separability_ceiling));
    }
  }
  for (std::size_t d = 0; d < spec.num_domains; ++d) {
    auto offset = random_unit(spec.dim, rng);
    for (auto& x : offset) x *= spec.domain_offset_scale;
    set.domain_offsets.push_back(std::move(offset));
  }
  return set;
}

double max_pairwise_cosine(const GeneratorSet& generators) {
  double best = -1.0;
  for (std::size_t a = 0; a < generators.num_classes(); ++a) {
    for (std::size_t b = a + 1; b < generators.num_classes(); ++b) {
      best = std::max(best, cosine_similarity(generators.classes[a].mean_direction,
                                              generators.classes[b].mean_direction));
    }
  }
  return best;
}

RegionLayout rectangle_layout(std::size_t height, std::size_t width, std::int32_t background,
                              std::span<const Rect> rects) {
  RegionLayout layout{height, width, std::vector<std::int32_t>(height * width, background)};
  for (const auto& r : rects) {
    for (std::size_t h = r.top; h < std::min(height, r.top + r.height); ++h) {
      for (std::size_t w = r.left; w < std::min(width, r.left + r.width); ++w) {
        layout.labels[h * width + w] = r.label;
      }
    }
  }
  return layout;
}

RegionLayout random_field_layout(std::size_t height, std::size_t width, std::span<const std::int32_t> classes,
                                 std::size_t cell, Rng& rng) {
  if (classes.empty() || cell == 0) throw ConfigError("random field needs classes and a positive cell size");
  RegionLayout layout{height, width, std::vector<std::int32_t>(height * width, classes[0])};
  std::uniform_int_distribution<std::size_t> pick(0, classes.size() - 1);
  const std::size_t cells_h = (height + cell - 1) / cell;
  const std::size_t cells_w = (width + cell - 1) / cell;
  for (std::size_t ch = 0; ch < cells_h; ++ch) {
    for (std::size_t cw = 0; cw < cells_w; ++cw) {
      const auto label = classes[pick(rng)];
      for (std::size_t h = ch * cell; h < std::min(height, (ch + 1) * cell); ++h) {
        for (std::size_t w = cw * cell; w < std::min(width, (cw + 1) * cell); ++w) {
          layout.labels[h * width + w] = label;
        }
      }
    }
  }
  return layout;
}

SyntheticScene generate_scene(const GeneratorSet& generators, const RegionLayout& layout, int domain_id,
                              std::uint64_t seed, std::string id) {
  if (layout.height == 0 || layout.width == 0 || layout.labels.empty()) {
    throw ConfigError("empty region layout");
  }
  if (layout.labels.size() != layout.height * layout.width) {
    throw ConfigError("region layout does not cover every pixel exactly once");
  }
  if (domain_id < 0 || static_cast<std::size_t>(domain_id) >= generators.domain_offsets.size()) {
    throw ConfigError(fmt::format("domain {} has no generator offset", domain_id));
  }
  const std::size_t dim = generators.dim;
  const auto& offset = generators.domain_offsets[static_cast<std::size_t>(domain_id)];
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(layout.labels.size() * dim);
  for (std::size_t p = 0; p < layout.labels.size(); ++p) {
    const auto label = layout.labels[p];
    if (label < 0 || static_cast<std::size_t>(label) >= generators.num_classes()) {
      throw ConfigError(fmt::format("layout label {} has no generator", label));
    }
    const auto& g = generators.classes[static_cast<std::size_t>(label)];
    for (std::size_t d = 0; d < dim; ++d) {
      values[p * dim + d] = g.mean_direction[d] + g.spread * normal(rng) + offset[d];
    }
  }
  return {std::move(id), FeatureMap(layout.height, layout.width, dim, std::move(values)),
          SegmentationMask(layout.height, layout.width, layout.labels), domain_id};
}

std::vector<SyntheticScene> generate_dataset(const GeneratorSet& generators, const DatasetSpec& spec,
                                             std::uint64_t seed, const std::string& id_prefix) {
  const auto num_classes = static_cast<std::int32_t>(generators.num_classes());
  const auto num_domains = static_cast<int>(generators.domain_offsets.size());
  std::vector<SyntheticScene> scenes;
  scenes.reserve(spec.num_scenes);
  for (std::size_t i = 0; i < spec.num_scenes; ++i) {
    Rng rng = make_rng(seed, {stream::kScenes, i});
    RegionLayout layout;
    if (spec.layout == LayoutKind::Rectangles) {
      std::uniform_int_distribution<std::int32_t> pick_class(0, num_classes - 1);
      const auto background = pick_class(rng);
      std::vector<Rect> rects;
      if (num_classes > 1 && spec.max_rects > 0) {
        std::uniform_int_distribution<std::size_t> count(1, spec.max_rects);
        std::uniform_int_distribution<std::size_t> side_h(std::max<std::size_t>(1, spec.height / 4),
                                                          std::max<std::size_t>(1, spec.height / 2));
        std::uniform_int_distribution<std::size_t> side_w(std::max<std::size_t>(1, spec.width / 4),
                                                          std::max<std::size_t>(1, spec.width / 2));
        const auto n = count(rng);
        for (std::size_t r = 0; r < n; ++r) {
          Rect rect;
          rect.height = side_h(rng);
          rect.width = side_w(rng);
          rect.top = std::uniform_int_distribution<std::size_t>(0, spec.height - rect.height)(rng);
          rect.left = std::uniform_int_distribution<std::size_t>(0, spec.width - rect.width)(rng);
          std::uniform_int_distribution<std::int32_t> other(0, num_classes - 2);
          rect.label = other(rng);
          if (rect.label >= background) ++rect.label;
          rects.push_back(rect);
        }
      }
      layout = rectangle_layout(spec.height, spec.width, background, rects);
    } else {
      std::vector<std::int32_t> classes(static_cast<std::size_t>(num_classes));
      for (std::int32_t c = 0; c < num_classes; ++c) classes[static_cast<std::size_t>(c)] = c;
      layout = random_field_layout(spec.height, spec.width, classes, spec.cell, rng);
    }
    const int domain = static_cast<int>(i % static_cast<std::size_t>(num_domains));
    scenes.push_back(generate_scene(generators, layout, domain, rng(),
                                    fmt::format("{}{:04d}", id_prefix, i)));
  }
  return scenes;
}

std::int32_t dominant_class(const SegmentationMask& truth, std::span<const std::int32_t> class_map) {
  if (truth.pixels() == 0) throw DataError("dominant class of an empty mask");
  std::map<std::int32_t, std::size_t> counts;
  for (auto fine : truth.labels()) {
    std::int32_t coarse = fine;
    if (!class_map.empty()) {
      if (static_cast<std::size_t>(fine) >= class_map.size()) {
        throw DataError(fmt::format("fine label {} missing from the class map", fine));
      }
      coarse = class_map[static_cast<std::size_t>(fine)];
    }
    ++counts[coarse];
  }
  // std::map iterates ascending, so strict > keeps the lowest id on ties.
  std::int32_t best = counts.begin()->first;
  std::size_t best_count = 0;
  for (const auto& [label, count] : counts) {
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

namespace {

std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(k, 0.0);
  double total = 0.0;
  while (total <= 0.0) {
    total = 0.0;
    for (auto& x : p) {
      x = gamma(rng);
      total += x;
    }
  }
  for (auto& x : p) x /= total;
  return p;
}

std::size_t sample_categorical(std::span<const double> p, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  // Rounding left u beyond the last cumulative sum: take the last nonzero entry.
  for (std::size_t i = p.size(); i-- > 0;) {
    if (p[i] > 0.0) return i;
  }
  return p.size() - 1;
}

}  // namespace

Partition dirichlet_partition(std::span<const std::int32_t> dominant_classes, const PartitionSpec& spec) {
  if (spec.num_clients == 0) throw ConfigError("partition needs at least one client");
  if (!(spec.alpha > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
  if (spec.mode != PartitionMode::Dirichlet) throw ConfigError("dirichlet_partition called with silo mode");

  std::set<std::int32_t> classes(dominant_classes.begin(), dominant_classes.end());
  Partition result;
  for (int attempt = 0;; ++attempt) {
    Rng rng = make_rng(spec.seed, {stream::kPartition, static_cast<std::uint64_t>(attempt)});
    std::map<std::int32_t, std::vector<double>> probabilities;
    for (auto c : classes) probabilities[c] = sample_dirichlet(spec.num_clients, spec.alpha, rng);

    result.clients.assign(spec.num_clients, {});
    for (std::size_t i = 0; i < dominant_classes.size(); ++i) {
      const auto client = sample_categorical(probabilities[dominant_classes[i]], rng);
      result.clients[client].push_back(i);
    }
    const auto empty = std::count_if(result.clients.begin(), result.clients.end(),
                                     [](const auto& c) { return c.empty(); });
    if (empty == 0) break;
    if (spec.empty_client_policy == EmptyClientPolicy::Accept || attempt >= spec.max_resamples) {
      result.warnings.push_back(fmt::format("{} client(s) received no scenes (attempt {}); accepted", empty,
                                            attempt + 1));
      break;
    }
    result.warnings.push_back(fmt::format("{} client(s) received no scenes; resampling", empty));
  }
  return result;
}

Partition silo_partition(std::span<const int> domain_ids, const PartitionSpec& spec) {
  if (spec.num_clients == 0) throw ConfigError("partition needs at least one client");
  if (spec.mode != PartitionMode::Silo) throw ConfigError("silo_partition called with dirichlet mode");
  std::set<int> domains(domain_ids.begin(), domain_ids.end());
  if (domains.size() % spec.num_clients != 0) {
    throw ConfigError(fmt::format("{} clients do not divide {} domains", spec.num_clients, domains.size()));
  }
  const std::size_t per_client = domains.size() / spec.num_clients;
  std::map<int, std::size_t> owner;
  std::size_t rank = 0;
  for (int d : domains) owner[d] = rank++ / per_client;

  Partition result;
  result.clients.assign(spec.num_clients, {});
  for (std::size_t i = 0; i < domain_ids.size(); ++i) result.clients[owner[domain_ids[i]]].push_back(i);
  return result;
}

double mean_client_entropy(const Partition& partition, std::span<const std::int32_t> dominant_classes) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& client : partition.clients) {
    if (client.empty()) continue;
    std::map<std::int32_t, std::size_t> histogram;
    for (auto i : client) ++histogram[dominant_classes[i]];
    double h = 0.0;
    for (const auto& [label, count] : histogram) {
      const double p = static_cast<double>(count) / static_cast<double>(client.size());
      h -= p * std::log(p);
    }
    total += h;
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

nlohmann::json partition_manifest(const Partition& partition, std::span<const std::string> scene_paths) {
  nlohmann::json clients = nlohmann::json::object();
  for (std::size_t k = 0; k < partition.clients.size(); ++k) {
    auto list = nlohmann::json::array();
    for (auto i : partition.clients[k]) list.push_back(scene_paths[i]);
    clients[std::to_string(k)] = std::move(list);
  }
  return {{"num_clients", partition.clients.size()}, {"clients", std::move(clients)}};
}

ScenePaths save_scene(const std::filesystem::path& dir, const SyntheticScene& scene) {
  std::filesystem::create_directories(dir);
  ScenePaths paths{dir / (scene.id + ".features.fuss"), dir / (scene.id + ".mask.fuss")};
  write_tensor_file(paths.features, to_tensor_file(scene.features));
  write_tensor_file(paths.mask, to_tensor_file(scene.truth));
  return paths;
}

SyntheticScene load_scene(const ScenePaths& paths, std::string id, int domain_id) {
  SyntheticScene scene{std::move(id), feature_map_from(read_tensor_file(paths.features)), {}, domain_id};
  if (!paths.mask.empty()) {
    scene.truth = mask_from(read_tensor_file(paths.mask));
    if (scene.truth.height() != scene.features.height() || scene.truth.width() != scene.features.width()) {
      throw DataError(fmt::format("mask {} does not match its feature grid", paths.mask.string()));
    }
  }
  return scene;
}

}  // namespace fuss
