#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fuss {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a tuple of ids,
/// e.g. (experiment seed, client id, round).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t h = mix64(base);
  for (auto id : ids) h = mix64(h ^ mix64(id + 0x632BE59BD9B4E019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> ids) {
  return Rng(derive_seed(base, ids));
}

// Stream tags keep seeds for different purposes apart.
namespace stream {
inline constexpr std::uint64_t kGenerators = 1;
inline constexpr std::uint64_t kScenes = 2;
inline constexpr std::uint64_t kPartition = 3;
inline constexpr std::uint64_t kInit = 4;
inline constexpr std::uint64_t kClient = 5;
inline constexpr std::uint64_t kServer = 6;
inline constexpr std::uint64_t kValidation = 7;
}  // namespace stream

}  // namespace fuss
