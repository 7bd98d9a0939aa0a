#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dptraffic {

// ============================================================================
// Seed derivation
// ============================================================================

/** SplitMix64 step; also used standalone as the per-trial generator in the
 *  Monte Carlo audits, where one 64-bit state per trial keeps parallel runs
 *  deterministic under any thread count. */
struct SplitMix64 {
    std::uint64_t state = 0;

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /** Uniform double in [0, 1). */
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /** Standard normal via Box-Muller; draws two uniforms per call. */
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }
};

inline std::uint64_t fnv1a_64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/** Derives an independent substream seed from a master seed, a textual label
 *  and an optional index. Distinct labels give uncorrelated streams, so e.g.
 *  toggling the privacy mechanism on or off does not change simulation noise. */
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index = 0) {
    SplitMix64 mix{master ^ fnv1a_64(label)};
    mix.next();
    mix.state += index * 0x9e3779b97f4a7c15ULL;
    return mix.next();
}

// ============================================================================
// Stream generator
// ============================================================================

/**
 * Seedable random stream used by the simulator and the noise mechanisms.
 *
 * Gaussian and Laplace variates are generated from explicit inverse-transform
 * and Box-Muller forms on top of mt19937_64 so that a given seed reproduces
 * the same values on every platform (std::normal_distribution makes no such
 * promise).
 */
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : eng_(seed) {}

    static RngStream derive(std::uint64_t master, std::string_view label, std::uint64_t index = 0) {
        return RngStream(derive_seed(master, label, index));
    }

    std::uint64_t next_u64() { return eng_(); }

    /** Uniform double in [0, 1). */
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double n = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
        return mean + stddev * n;
    }

    /** Zero-mean Laplace variate with the given scale b (mean |x| = b). */
    double laplace(double scale) {
        double u = uniform() - 0.5;
        double t = 1.0 - 2.0 * std::abs(u);
        if (t <= 0.0) t = 0x1.0p-53;
        double mag = -scale * std::log(t);
        return u < 0.0 ? -mag : mag;
    }

    /** Poisson variate (Knuth); intended for small detector-count means. */
    int poisson(double mean) {
        if (mean <= 0.0) return 0;
        double limit = std::exp(-mean);
        double p = 1.0;
        int k = 0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return k - 1;
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace dptraffic
