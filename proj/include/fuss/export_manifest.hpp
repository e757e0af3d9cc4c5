#pragma once

// Reader for feature exports produced by an external backbone: a JSON
// manifest listing per-image feature tensors (H x W x D', float32) and
// optional int32 masks on the same patch grid.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fuss/synth_data.hpp"

namespace fuss {

struct ExportEntry {
  std::string image;  // source image path, informational
  std::filesystem::path features;
  std::optional<std::filesystem::path> mask;
  std::size_t grid_height = 0;
  std::size_t grid_width = 0;
  int domain_id = 0;
};

struct ExportManifest {
  std::string model_id;
  std::size_t feature_dim = 0;
  std::vector<ExportEntry> entries;
};

/// Parses the manifest; relative file paths resolve against its directory.
ExportManifest read_export_manifest(const std::filesystem::path& path);

/// Loads every entry, checking the tensor dims against the declared grid
/// and feature dim. Entries without a mask are rejected since scoring needs one.
std::vector<SyntheticScene> load_exported_scenes(const ExportManifest& manifest);

}  // namespace fuss
