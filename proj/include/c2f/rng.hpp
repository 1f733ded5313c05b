#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace c2f {

using Rng = std::mt19937_64;

/// Independent generator derived from a root seed and a stream name
/// ("model", "sampler", "split", ...).
Rng make_stream(std::uint64_t seed, std::string_view name);

/// Child seed for a named sub-stream, usable where a plain integer is needed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Uniform integer in [lo, hi].
inline long uniform_int(Rng& rng, long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng); }

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

}  // namespace c2f
