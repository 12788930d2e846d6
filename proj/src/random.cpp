#include "hawkes_drift/random.hpp"

namespace hawkes_drift {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001B3ULL;
    }
    return hash;
}

std::uint64_t substream_key(std::uint64_t master_seed,
                            std::uint64_t replicate,
                            std::string_view task) noexcept {
    const std::uint64_t mixed = splitmix64(master_seed ^ splitmix64(replicate + 1));
    return splitmix64(mixed ^ fnv1a64(task));
}

} // namespace hawkes_drift
