#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hawkes_drift {

using Rng = std::mt19937_64;

[[nodiscard]] std::uint64_t splitmix64(std::uint64_t x) noexcept;
[[nodiscard]] std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Substream key for one (replicate, task) pair of an experiment.
///
/// key = splitmix64(splitmix64(master ^ splitmix64(replicate + 1)) ^ fnv1a64(task))
///
/// This rule is frozen: changing it changes every published seed.
[[nodiscard]] std::uint64_t substream_key(std::uint64_t master_seed,
                                          std::uint64_t replicate,
                                          std::string_view task) noexcept;

[[nodiscard]] inline Rng make_stream(std::uint64_t key) { return Rng(key); }

} // namespace hawkes_drift
