#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace spdiv {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s);

/// Mixes a base seed with a sequence of labels/indices into a child seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                                 std::initializer_list<std::uint64_t> parts = {}) {
    std::uint64_t h = splitmix64(seed ^ fnv1a64(label));
    for (auto p : parts) h = splitmix64(h ^ p);
    return h;
}

/// Seeded generator whose outputs are identical on every platform.
/// std::mt19937_64 is fully specified by the standard; the distributions in
/// <random> are not, so bounded and real draws are done by hand here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(
                        uniform_index(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    /// Uniform real in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double gumbel() {
        double u = uniform01();
        while (u <= 0.0) u = uniform01();
        return -std::log(-std::log(u));
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace spdiv
