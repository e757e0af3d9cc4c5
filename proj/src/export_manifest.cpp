#include "fuss/export_manifest.hpp"

#include <fstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "fuss/errors.hpp"
#include "fuss/tensor_io.hpp"

namespace fuss {

ExportManifest read_export_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open export manifest {}", path.string()));
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  try {
    const auto doc = nlohmann::json::parse(in);
    ExportManifest manifest;
    manifest.model_id = doc.at("model").get<std::string>();
    manifest.feature_dim = doc.at("feature_dim").get<std::size_t>();
    for (const auto& e : doc.at("entries")) {
      ExportEntry entry;
      entry.image = e.value("image", std::string());
      entry.features = resolve(e.at("features").get<std::string>());
      if (e.contains("mask") && !e.at("mask").is_null()) entry.mask = resolve(e.at("mask").get<std::string>());
      const auto grid = e.at("grid").get<std::vector<std::size_t>>();
      if (grid.size() != 2) throw DataError("export entry grid must be [height, width]");
      entry.grid_height = grid[0];
      entry.grid_width = grid[1];
      entry.domain_id = e.value("domain", 0);
      manifest.entries.push_back(std::move(entry));
    }
    return manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("malformed export manifest {}: {}", path.string(), e.what()));
  }
}

std::vector<SyntheticScene> load_exported_scenes(const ExportManifest& manifest) {
  std::vector<SyntheticScene> scenes;
  for (const auto& entry : manifest.entries) {
    auto features = feature_map_from(read_tensor_file(entry.features));
    if (features.height() != entry.grid_height || features.width() != entry.grid_width ||
        features.dim() != manifest.feature_dim) {
      throw DataError(fmt::format("{} is {}x{}x{}, manifest declares {}x{}x{}", entry.features.string(),
                                  features.height(), features.width(), features.dim(), entry.grid_height,
                                  entry.grid_width, manifest.feature_dim));
    }
    if (!entry.mask) throw DataError(fmt::format("{} has no mask", entry.features.string()));
    auto mask = mask_from(read_tensor_file(*entry.mask));
    if (mask.height() != entry.grid_height || mask.width() != entry.grid_width) {
      throw DataError(fmt::format("mask {} does not match the patch grid", entry.mask->string()));
    }
    scenes.push_back({entry.features.stem().stem().string(), std::move(features), std::move(mask), entry.domain_id});
  }
  return scenes;
}

}  // namespace fuss
