#pragma once

#include <nlohmann/json.hpp>

#include "fuss/config.hpp"

namespace fuss::fixture {

/// A federation small enough to run many times inside a unit test.
inline nlohmann::json tiny_config_json() {
  return {{"schema_version", 1},
          {"seed", 3},
          {"data",
           {{"num_classes", 3},
            {"feature_dim", 12},
            {"train_scenes", 16},
            {"validation_scenes", 6},
            {"height", 4},
            {"width", 4},
            {"partition", {{"mode", "dirichlet"}, {"num_clients", 3}, {"alpha", 1.0}}}}},
          {"model", {{"embed_dim", 4}, {"num_clusters", 3}}},
          {"training", {{"rounds", 2}, {"query_count", 4}, {"random_supports", 2}}},
          {"aggregation", {{"strategy", "fedcc_maximin"}}}};
}

inline ExperimentConfig tiny_config() { return parse_config(tiny_config_json()); }

}  // namespace fuss::fixture
