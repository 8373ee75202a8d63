#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace fdia {

/// Name recorded in outputs next to every seed.
inline constexpr std::string_view kRngName = "splitmix64/1";

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Uniform in [0, 1) with 53 random bits.
constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based draw: the value depends only on (seed, stream, index), so a
/// sample can be regenerated anywhere without replaying a sequence.
constexpr std::uint64_t hash_counter(std::uint64_t seed, std::uint64_t stream,
                                     std::uint64_t index) noexcept {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

/// Standard normal via Box-Muller from two counter-based uniforms.
inline double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    const std::uint64_t h = hash_counter(seed, stream, index);
    const double u1 = 1.0 - to_unit(h);  // (0, 1]
    const double u2 = to_unit(splitmix64(h));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Sequential generator (splitmix64 stream).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() noexcept {
        const std::uint64_t x = state_;
        state_ += 0x9e3779b97f4a7c15ULL;
        return splitmix64(x);
    }
    double uniform() noexcept { return to_unit(next()); }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : next() % n; }
    double normal() noexcept {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

}  // namespace fdia
