#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

#include "elect/tensor.hpp"

namespace elect {

inline constexpr std::uint64_t kSplitMixGamma = 0x9E3779B97F4A7C15ULL;

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Counter-addressed splitmix64 stream. Draw k of seed s is
/// mix(s + (k + 1) * gamma), which is exactly the classic sequential
/// splitmix64 generator started from state s.
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64() {
        ++counter_;
        return splitmix64_mix(seed_ + counter_ * kSplitMixGamma);
    }

    /// Uniform in (0, 1]: (u + 1) * 2^-64.
    double next_open_unit() { return (static_cast<double>(next_u64()) + 1.0) * 0x1p-64; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(next_u64() >> 11) * 0x1p-53);
    }

    /// Integer uniform in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    /// One Box-Muller pair; consumes two draws.
    std::pair<double, double> normal_pair() {
        const double u1 = next_open_unit();
        const double u2 = next_open_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(theta), r * std::sin(theta)};
    }

  private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

/// Standard-normal tensor filled in row-major order. Both Box-Muller outputs
/// are used; an odd trailing sample discards the second half of its pair.
inline Tensor gaussian_noise(SeededRng& rng, const Shape& shape) {
    if (shape.empty()) throw InvalidArgument("gaussian_noise: shape is empty");
    for (auto d : shape) {
        if (d == 0) throw InvalidArgument("gaussian_noise: zero-sized dimension in " + shape_str(shape));
    }
    const std::size_t n = shape_numel(shape);
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; i += 2) {
        auto [a, b] = rng.normal_pair();
        out[i] = static_cast<float>(a);
        if (i + 1 < n) out[i + 1] = static_cast<float>(b);
    }
    return Tensor(shape, std::move(out));
}

inline Tensor gaussian_noise(std::uint64_t seed, const Shape& shape) {
    SeededRng rng(seed);
    return gaussian_noise(rng, shape);
}

/// Derives an independent stream key from a parent seed and a tag.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) {
    return splitmix64_mix(splitmix64_mix(parent ^ 0xD6E8FEB86659FD93ULL) + tag * kSplitMixGamma);
}

/// FNV-1a, for turning strings into stream keys.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace elect
