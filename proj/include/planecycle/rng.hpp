#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace planecycle {

// Integer-only PRNG so the same seed reproduces the same stream on every
// platform. Floating-point conversions below use fixed expressions only.
struct SplitMix64 {
    uint64_t state = 0;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        state += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in (0, 1]: 53 mantissa bits, never zero.
    double next_unit() {
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }

    // Uniform in [0, 1).
    double next_unit_half_open() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (cosine branch only; one value per pair
    // of stream outputs, so the stream position stays easy to reason about).
    double next_gaussian() {
        double u1 = next_unit();
        double u2 = next_unit_half_open();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }
};

inline uint64_t fnv1a64(const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xCBF29CE484222325ULL;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s) {
    return fnv1a64(s.data(), s.size());
}

// Per-tensor stream seed: mixes the archive seed with the tensor name so
// streams are independent of generation order.
inline uint64_t tensor_stream_seed(uint64_t seed, std::string_view name) {
    SplitMix64 mix(seed ^ fnv1a64(name));
    return mix.next();
}

} // namespace planecycle
