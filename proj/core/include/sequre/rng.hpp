#pragma once

#include <cstdint>
#include <random>

namespace sequre {

/// SplitMix64 finalizer; used to derive independent stream seeds from one root seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept
{
    return mix_seed(root ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed) { return Engine(mix_seed(seed)); }

/// Uniform integer in [0, bound) by rejection; portable across standard libraries.
inline std::uint64_t uniform_below(Engine& eng, std::uint64_t bound)
{
    const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} - bound + 1) % bound;
    for (;;) {
        const std::uint64_t r = eng();
        if (r >= limit) return r % bound;
    }
}

}  // namespace sequre
