#pragma once

#include <cstdint>
#include <random>

namespace f3ast {

using Rng = std::mt19937_64;

/// Named sub-streams. Every concern draws from its own stream so that, for a
/// fixed master seed, swapping the selection policy leaves the availability
/// and data streams untouched.
enum class Stream : std::uint64_t {
  AvailabilityParams = 1,
  Availability = 2,
  Data = 3,
  Batching = 4,
  Policy = 5,
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed for sub-stream `stream` of `master`, optionally keyed further by
/// (a, b), e.g. (round, client) for per-client batching streams.
std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t a = 0,
                          std::uint64_t b = 0);

Rng make_stream(std::uint64_t master, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0);

/// Uniform double in [0, 1) using the top 53 bits of one engine draw. Used
/// instead of std::uniform_real_distribution so the bit stream is portable.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two uniform01 draws (no cached spare).
double standard_normal(Rng& rng);

/// Uniform integer in [0, n) by rejection; n > 0.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

}  // namespace f3ast
