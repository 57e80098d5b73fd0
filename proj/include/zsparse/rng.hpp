#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "zsparse/tensor.hpp"

namespace zsparse {

/// Counter-based SplitMix64. Output k of seed s is mix(s + (k+1)*0x9E3779B97F4A7C15).
/// Normals use Box-Muller on two uniforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() {
        ++counter_;
        std::uint64_t z = seed_ + counter_ * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), by rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Derive an independent generator, e.g. one per weight tensor.
    Rng fork(std::uint64_t stream) {
        return Rng(next_u64() ^ (stream * 0xD1B54A32D192ED03ull));
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

inline Tensor random_normal(Shape shape, Rng& rng, float stddev = 1.0f) {
    Tensor t(std::move(shape));
    for (float& v : t.data()) v = static_cast<float>(rng.normal() * stddev);
    return t;
}

inline Tensor random_uniform(Shape shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (float& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

}  // namespace zsparse
