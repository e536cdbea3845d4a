#pragma once

#include <cmath>
#include <cstdint>

namespace saint {

// Deterministic seeded generator: splitmix64 for the integer stream,
// Box-Muller (two uniforms per normal, no cached spare) on top. The stream
// depends only on the seed and the call sequence, so identical seeds give
// identical output on every platform. Single-owner by convention; never
// share one instance across threads.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 24 bits of mantissa, exact in f32.
    float uniform() {
        return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
    }

    // Standard normal via Box-Muller; consumes exactly two uniforms.
    float normal() {
        float u1 = uniform();
        float u2 = uniform();
        // Avoid log(0).
        if (u1 <= 0.0f) u1 = 1.0f / 16777216.0f;
        float radius = std::sqrt(-2.0f * std::log(u1));
        return radius * std::cos(6.2831853071795864769f * u2);
    }

    // Integer in [0, n) via fixed-point multiply. Consumes exactly one draw
    // regardless of n; bias is negligible for the small n used here.
    uint64_t next_below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

private:
    uint64_t state_;
};

}  // namespace saint
