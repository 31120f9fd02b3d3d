#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gcate {

using Rng = std::mt19937_64;

/// Deterministic child seed for a named substream ("init", "generator",
/// "split", ...) and an optional replicate index.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  return Rng(substream_seed(seed, name, index));
}

}  // namespace gcate
