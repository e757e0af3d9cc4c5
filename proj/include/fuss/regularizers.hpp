#pragma once

// Optional local-loss add-ons: the FedProx proximal term on the head and the
// MOON-style model-contrastive term on pooled segmentation embeddings.

#include <span>
#include <vector>

#include "fuss/head.hpp"

namespace fuss {

enum class RegularizerKind { None, FedProx, FedMoon };

struct RegularizerConfig {
  RegularizerKind kind = RegularizerKind::None;
  double mu = 0.01;          // proximal strength
  double tau = 0.5;          // contrastive temperature
  double moon_weight = 1.0;  // weight of the contrastive term
};

void validate(const RegularizerConfig& config);

struct ProxTerm {
  double loss = 0.0;
  HeadParams grad;
};

/// (mu / 2) ||local - global||^2 and its gradient mu (local - global).
ProxTerm fedprox_term(const HeadParams& local, const HeadParams& global, double mu);

struct MoonTerm {
  double loss = 0.0;
  std::vector<double> grad;  // with respect to z_local
  bool skipped = false;      // a zero vector made the term undefined
};

/// -log( e^{cos(z, z_global)/tau} / (e^{cos(z, z_global)/tau} + e^{cos(z, z_prev)/tau}) )
MoonTerm fedmoon_term(std::span<const double> z_local, std::span<const double> z_global,
                      std::span<const double> z_prev, double tau);

}  // namespace fuss
