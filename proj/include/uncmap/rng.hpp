#pragma once

// Counter-based random streams. Every draw is a pure function of
// (seed, stream tag, counters), so results never depend on iteration order
// or on how work is split across threads.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace uncmap::rng {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash(std::uint64_t seed, std::uint64_t tag, std::uint64_t a,
                                    std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
    h = mix64(h ^ tag);
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    return mix64(h ^ c);
}

/// Uniform in the open interval (0, 1) with 53 bits of resolution.
inline constexpr double to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Stream tags; distinct streams never share counters.
enum class Stream : std::uint64_t {
    logit_noise = 1,      // reparameterization epsilon
    scene_mu_noise = 2,   // scenegen logit perturbation
    scene_layout = 3,     // scenegen geometry jitter
    candidates = 4,       // candidate offset amplitudes
    selfcheck = 5,        // CLI gradient spot checks
};

struct NormalPair {
    double first;
    double second;
};

/// Box-Muller pair for the given counters.
inline NormalPair normal_pair(std::uint64_t seed, Stream s, std::uint64_t a, std::uint64_t b = 0,
                              std::uint64_t c = 0) {
    const auto tag = static_cast<std::uint64_t>(s);
    const double u1 = to_open_unit(hash(seed, tag, a, b, 2 * c));
    const double u2 = to_open_unit(hash(seed, tag, a, b, 2 * c + 1));
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(th), r * std::sin(th)};
}

inline double normal(std::uint64_t seed, Stream s, std::uint64_t a, std::uint64_t b = 0,
                     std::uint64_t c = 0) {
    return normal_pair(seed, s, a, b, c).first;
}

inline double uniform(std::uint64_t seed, Stream s, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
    return to_open_unit(hash(seed, static_cast<std::uint64_t>(s), a, b, c));
}

/// Uniform in [lo, hi).
inline double uniform(double lo, double hi, std::uint64_t seed, Stream s, std::uint64_t a,
                      std::uint64_t b = 0, std::uint64_t c = 0) {
    return lo + (hi - lo) * uniform(seed, s, a, b, c);
}

}  // namespace uncmap::rng
