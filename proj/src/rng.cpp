#include "agf/rng.hpp"

#include <cmath>
#include <numbers>

namespace agf::rng {

double normal(std::uint64_t seed, std::uint64_t counter) {
    // u1 in (0, 1] so the log is finite.
    const double u1 =
        (static_cast<double>(mix(seed, 2 * counter) >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01(seed, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace agf::rng
