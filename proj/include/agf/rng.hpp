#pragma once

#include <cstdint>

namespace agf {

/// Counter-based pseudo-random generator: splitmix64 finalizer applied to a
/// (seed, counter) pair. Every draw is a pure function of its inputs, so
/// streams are reproducible regardless of evaluation order and can be split
/// freely by deriving sub-seeds.
namespace rng {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t z = seed + counter * kGolden + kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Derive an independent sub-seed (for splitting one stream into several).
inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) {
    return mix(seed ^ 0xD1B54A32D192ED03ull, tag);
}

/// Uniform double in [0, 1).
inline double uniform01(std::uint64_t seed, std::uint64_t counter) {
    return static_cast<double>(mix(seed, counter) >> 11) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::uint64_t counter, double lo, double hi) {
    return lo + (hi - lo) * uniform01(seed, counter);
}

/// Standard normal via Box-Muller; consumes counters 2k and 2k+1.
double normal(std::uint64_t seed, std::uint64_t counter);

/// Stateful convenience wrapper around the counter stream.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : seed_(seed) {}
    double uniform01() { return rng::uniform01(seed_, counter_++); }
    double uniform(double lo, double hi) { return rng::uniform(seed_, counter_++, lo, hi); }
    double normal() { return rng::normal(seed_, counter_++); }
    std::uint64_t bits() { return mix(seed_, counter_++); }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace rng
}  // namespace agf
