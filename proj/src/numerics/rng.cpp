#include "deepinsert/numerics/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace deepinsert::numerics {

Rng Rng::at(std::uint64_t seed, std::uint64_t position) {
    Rng rng(seed);
    rng.engine_.discard(position);
    rng.position_ = position;
    return rng;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: empty range");
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

double Rng::normal(double mean, double stddev) {
    // Box-Muller; one draw per call, the sine branch is discarded.
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * radius * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace deepinsert::numerics
