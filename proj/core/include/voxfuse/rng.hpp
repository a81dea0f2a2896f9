#pragma once

#include <cstdint>
#include <random>

namespace voxfuse {

// splitmix64; used to derive independent stream seeds from (seed, counter)
// pairs so concurrent scans/members never share RNG state.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (counter + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// mt19937_64 raw output is specified by the standard, so sequences are
// reproducible across platforms. The bounded/unit conversions below avoid
// std::*_distribution, whose outputs are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double next_unit() { // [0, 1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    std::uint32_t next_below(std::uint32_t n) { // [0, n)
        return static_cast<std::uint32_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
    }

    std::int64_t next_in(std::int64_t lo, std::int64_t hi) { // [lo, hi] inclusive
        return lo + static_cast<std::int64_t>(next_below(static_cast<std::uint32_t>(hi - lo + 1)));
    }

private:
    std::mt19937_64 engine_;
};

} // namespace voxfuse
