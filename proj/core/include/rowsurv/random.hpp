#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rowsurv {

using Rng = std::mt19937_64;

/// Deterministic substream derivation.
///
/// Every random draw in the library comes from an engine seeded by
/// `stream_seed(seed, name, index)`, so results depend only on the user seed,
/// the purpose of the stream, and the replicate index, never on scheduling.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

inline Rng make_stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  return Rng(stream_seed(seed, name, index));
}

/// Beta(a, b) via the ratio of gamma variates.
double draw_beta(Rng& rng, double a, double b);

}  // namespace rowsurv
