#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sdecade {

/// Provenance of a random stream: the master seed and the substream index.
struct SeedRecord {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  bool operator==(const SeedRecord&) const = default;
};

using Engine = std::mt19937_64;

/// Engine for substream `rec.stream` of master seed `rec.seed`. Streams with
/// distinct (seed, stream, label) triples are seeded independently, so path v
/// draws the same numbers no matter how many other paths run alongside it.
Engine make_engine(SeedRecord rec, std::uint64_t label = 0);

/// Deterministically derives a master seed for a named purpose ("dataset",
/// "optimizer", ...) from the user's master seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

/// Labels for engines that share a (seed, stream) pair but must not overlap.
namespace stream_label {
inline constexpr std::uint64_t increments = 0;
inline constexpr std::uint64_t bridge = 1;  // + refinement level
}  // namespace stream_label

}  // namespace sdecade
