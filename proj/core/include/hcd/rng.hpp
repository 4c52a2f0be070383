#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace hcd {

/// One step of the splitmix64 generator. Used to derive independent
/// sub-seeds (per tree, per restart, per run) from a single master seed.
std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic child seed for stream `index` of `seed`.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index);

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed) { return Engine(splitmix64(seed)); }

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
double uniform01(Engine& engine);

/// Uniform integer in [0, n). n must be positive.
std::size_t uniform_index(Engine& engine, std::size_t n);

/// `count` distinct indices from [0, n), in draw order (partial Fisher-Yates).
std::vector<std::size_t> sample_without_replacement(Engine& engine, std::size_t n,
                                                    std::size_t count);

}  // namespace hcd
