#pragma once

#include <cmath>
#include <cstdint>

namespace segloc {

/// Deterministic 64-bit generator (splitmix64). All sampling routines are
/// implemented here rather than via <random> distributions, which are not
/// bit-portable across standard library implementations. Every random draw
/// in the project flows through this type from a single seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Unbiased integer in [0, n). n must be >= 1.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        std::uint64_t mask = ~0ull >> __builtin_clzll(n - 1 | 1);
        std::uint64_t v;
        do {
            v = next_u64() & mask;
        } while (v >= n);
        return v;
    }

    bool flip() { return (next_u64() >> 63) != 0; }

    /// Standard normal via Box-Muller; consumes two uniforms per call.
    double normal() {
        double u1 = 1.0 - next_double(); // (0, 1]
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    std::uint64_t state_;
};

inline std::uint64_t scramble_u64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Derive an independent sub-seed from (seed, stream). Used to give every
/// synthesized pair / worker-independent task its own counter-based stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    return scramble_u64(scramble_u64(seed) ^ scramble_u64(~stream));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return mix_seed(mix_seed(seed, stream), index);
}

/// Stream tags keeping every consumer of the master seed on a distinct
/// sub-stream. Values are part of the reproducibility contract.
namespace stream {
inline constexpr std::uint64_t toy_fore = 1;
inline constexpr std::uint64_t toy_back = 2;
inline constexpr std::uint64_t synth_pair = 3;
inline constexpr std::uint64_t encoder_init = 4;
inline constexpr std::uint64_t train_order = 5;
inline constexpr std::uint64_t bank_random = 6;
inline constexpr std::uint64_t bank_source = 7;
inline constexpr std::uint64_t probe = 8;
} // namespace stream

} // namespace segloc
