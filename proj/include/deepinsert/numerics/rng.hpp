#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace deepinsert::numerics {

// Seeded stream with a portable draw sequence. std::mt19937_64's output is
// fixed by the standard; the distribution code here is ours so results do not
// depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    // Restore a stream at an exact draw position.
    static Rng at(std::uint64_t seed, std::uint64_t position);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t position() const { return position_; }

    std::uint64_t next_u64() {
        ++position_;
        return engine_();
    }
    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal(double mean = 0.0, double stddev = 1.0);

    template <typename Vec>
    void shuffle(Vec& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t position_ = 0;
    std::mt19937_64 engine_;
};

}  // namespace deepinsert::numerics
