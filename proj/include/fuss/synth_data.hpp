#pragma once

// Synthetic frozen-backbone features: labeled scenes whose pixel features are
// drawn around per-class mean directions, plus client partitioning.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuss/rng.hpp"
#include "fuss/tensor.hpp"

namespace fuss {

struct ClassGenerator {
  std::vector<double> mean_direction;  // unit length
  double spread = 0.0;                 // standard deviation of isotropic noise
};

struct GeneratorSpec {
  std::size_t num_classes = 4;
  std::size_t dim = 32;
  double spread = 0.05;
  double separability_ceiling = 0.1;  // max pairwise cosine between class means
  std::size_t num_domains = 1;
  double domain_offset_scale = 0.0;   // norm of each per-domain offset vector
};

struct GeneratorSet {
  std::size_t dim = 0;
  std::vector<ClassGenerator> classes;
  std::vector<std::vector<double>> domain_offsets;

  std::size_t num_classes() const { return classes.size(); }
};

GeneratorSet make_generators(const GeneratorSpec& spec, std::uint64_t seed);
double max_pairwise_cosine(const GeneratorSet& generators);

/// A full per-pixel class assignment for one scene.
struct RegionLayout {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::int32_t> labels;
};

struct Rect {
  std::size_t top = 0, left = 0, height = 0, width = 0;
  std::int32_t label = 0;
};

/// Background class everywhere, then rectangles painted in order (clipped).
RegionLayout rectangle_layout(std::size_t height, std::size_t width, std::int32_t background,
                              std::span<const Rect> rects);
/// Square cells of side `cell`, each filled with a class drawn uniformly from `classes`.
RegionLayout random_field_layout(std::size_t height, std::size_t width, std::span<const std::int32_t> classes,
                                 std::size_t cell, Rng& rng);

struct SyntheticScene {
  std::string id;
  FeatureMap features;     // frozen backbone output, never regenerated
  SegmentationMask truth;  // evaluation only
  int domain_id = 0;
};

SyntheticScene generate_scene(const GeneratorSet& generators, const RegionLayout& layout, int domain_id,
                              std::uint64_t seed, std::string id = {});

enum class LayoutKind { Rectangles, RandomField };

struct DatasetSpec {
  std::size_t num_scenes = 0;
  std::size_t height = 16;
  std::size_t width = 16;
  LayoutKind layout = LayoutKind::Rectangles;
  std::size_t max_rects = 2;  // Rectangles: objects drawn over the background class
  std::size_t cell = 4;       // RandomField: cell side
};

std::vector<SyntheticScene> generate_dataset(const GeneratorSet& generators, const DatasetSpec& spec,
                                             std::uint64_t seed, const std::string& id_prefix);

/// Most frequent coarse class after mapping fine labels through `class_map`
/// (an empty map is the identity). Ties go to the lowest coarse id.
std::int32_t dominant_class(const SegmentationMask& truth, std::span<const std::int32_t> class_map = {});

enum class PartitionMode { Dirichlet, Silo };
enum class EmptyClientPolicy { Resample, Accept };

struct PartitionSpec {
  std::size_t num_clients = 1;
  double alpha = 0.5;
  PartitionMode mode = PartitionMode::Dirichlet;
  std::uint64_t seed = 0;
  EmptyClientPolicy empty_client_policy = EmptyClientPolicy::Resample;
  int max_resamples = 10;
};

struct Partition {
  std::vector<std::vector<std::size_t>> clients;  // scene indices per client, ascending
  std::vector<std::string> warnings;
};

/// Per dominant class, draws p ~ Dir(alpha * 1_K) and sends each scene of that
/// class to a client sampled from p.
Partition dirichlet_partition(std::span<const std::int32_t> dominant_classes, const PartitionSpec& spec);

/// Contiguous blocks of domains per client (sorted domain ids).
Partition silo_partition(std::span<const int> domain_ids, const PartitionSpec& spec);

/// Mean over non-empty clients of the Shannon entropy (nats) of the client's
/// dominant-class histogram.
double mean_client_entropy(const Partition& partition, std::span<const std::int32_t> dominant_classes);

/// Client id -> list of scene file paths.
nlohmann::json partition_manifest(const Partition& partition, std::span<const std::string> scene_paths);

struct ScenePaths {
  std::filesystem::path features;
  std::filesystem::path mask;
};

ScenePaths save_scene(const std::filesystem::path& dir, const SyntheticScene& scene);
SyntheticScene load_scene(const ScenePaths& paths, std::string id, int domain_id = 0);

}  // namespace fuss
