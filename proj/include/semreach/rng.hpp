#pragma once
// Seeded random streams.
//
// Two flavours are provided:
//  - Rng: a sequential stream (splitmix64-seeded mt19937_64) for samplers
//    such as the scenario generator.
//  - NoiseStream: a counter-based stream keyed by (seed, step, cell, tag).
//    Sensor noise drawn from it depends only on where and when a cell is
//    observed, never on how many draws happened before, so paired runs
//    (different planners on the same scenario) see the same noise.
//
// All uniform conversions are done here rather than through <random>
// distributions so results are identical across standard libraries.

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace semreach {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
    return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Derive an independent child seed from a parent seed and a label.
inline constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view label,
                                           std::uint64_t index = 0) noexcept {
    return hash_combine(hash_combine(parent, fnv1a64(label)), index);
}

/// Top 53 bits of a 64-bit word mapped to [0, 1).
inline constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    std::uint64_t next() { return engine_(); }

    double uniform() { return to_unit(engine_()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [0, n). Rejection keeps it unbiased.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

private:
    std::mt19937_64 engine_;
};

/// Counter-based noise source. Copyable, stateless, thread-safe.
class NoiseStream {
public:
    constexpr NoiseStream() = default;
    constexpr explicit NoiseStream(std::uint64_t seed) : seed_(seed) {}

    constexpr std::uint64_t seed() const noexcept { return seed_; }

    constexpr double uniform(std::uint64_t step, std::uint64_t cell, std::uint64_t tag) const noexcept {
        return to_unit(hash_combine(hash_combine(hash_combine(seed_, step), cell), tag));
    }

    constexpr NoiseStream child(std::string_view label, std::uint64_t index = 0) const noexcept {
        return NoiseStream{derive_seed(seed_, label, index)};
    }

private:
    std::uint64_t seed_ = 0;
};

}  // namespace semreach
