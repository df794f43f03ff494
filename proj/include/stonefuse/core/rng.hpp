#pragma once

#include <cstdint>
#include <random>

namespace stonefuse {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds from (seed, salt).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt = 0) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based SplitMix64 stream: cheap bulk bits (dropout masks).
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}
    void seed(std::uint64_t seed) { state_ = seed; }
    std::uint64_t operator()() { return mix_seed(state_++); }

private:
    std::uint64_t state_;
};

// Uniform in [0, 1) from the top 53 bits; independent of the standard library's
// distribution implementation.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

double standard_normal(Rng& rng);

template <typename It>
void shuffle(It first, It last, Rng& rng) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(first[i - 1], first[uniform_index(rng, i)]);
    }
}

}  // namespace stonefuse
