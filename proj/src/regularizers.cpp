#include "fuss/regularizers.hpp"

#include <cmath>

#include "fuss/errors.hpp"

namespace fuss {

void validate(const RegularizerConfig& config) {
  if (config.mu < 0.0) throw ConfigError("FedProx mu must be nonnegative");
  if (!(config.tau > 0.0)) throw ConfigError("FedMoon temperature must be positive");
  if (config.moon_weight < 0.0) throw ConfigError("FedMoon weight must be nonnegative");
}

ProxTerm fedprox_term(const HeadParams& local, const HeadParams& global, double mu) {
  if (!(local.shape() == global.shape())) throw ConfigError("FedProx between differently shaped heads");
  ProxTerm out{0.0, HeadParams(local.shape())};
  const auto a = local.flat();
  const auto b = global.flat();
  auto g = out.grad.flat();
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sq += diff * diff;
    g[i] = mu * diff;
  }
  out.loss = 0.5 * mu * sq;
  return out;
}

MoonTerm fedmoon_term(std::span<const double> z_local, std::span<const double> z_global,
                      std::span<const double> z_prev, double tau) {
  if (z_local.size() != z_global.size() || z_local.size() != z_prev.size()) {
    throw ConfigError("FedMoon vectors must share a dimension");
  }
  if (!(tau > 0.0)) throw ConfigError("FedMoon temperature must be positive");
  MoonTerm out;
  out.grad.assign(z_local.size(), 0.0);
  const double nz = norm(z_local);
  const double ng = norm(z_global);
  const double np = norm(z_prev);
  if (nz == 0.0 || ng == 0.0 || np == 0.0) {
    out.skipped = true;
    return out;
  }
  const double s_global = dot(z_local, z_global) / (nz * ng);
  const double s_prev = dot(z_local, z_prev) / (nz * np);
  // loss = softplus((s_prev - s_global) / tau)
  const double x = (s_prev - s_global) / tau;
  out.loss = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  const double sigma = 1.0 / (1.0 + std::exp(-x));  // softmax weight of the negative
  const double d_global = -sigma / tau;
  const double d_prev = sigma / tau;
  for (std::size_t i = 0; i < z_local.size(); ++i) {
    const double u = z_local[i] / nz;
    const double dcos_global = (z_global[i] / ng - s_global * u) / nz;
    const double dcos_prev = (z_prev[i] / np - s_prev * u) / nz;
    out.grad[i] = d_global * dcos_global + d_prev * dcos_prev;
  }
  return out;
}

}  // namespace fuss
