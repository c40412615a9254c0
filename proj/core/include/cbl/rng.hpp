#pragma once

#include <cmath>
#include <cstdint>

namespace cbl {

/// Counter-free splitmix64 step, used for seeding and key mixing.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic xoshiro256** stream. Distributions are hand-rolled on top of
/// the raw 64-bit output so generated corpora are bit-identical across
/// standard libraries and compilers.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : state_) w = splitmix64(sm);
    }

    /// Stream keyed by (seed, index, tag); independent streams for
    /// per-scene generation.
    static Rng keyed(std::uint64_t seed, std::uint64_t index, std::uint64_t tag = 0) {
        std::uint64_t sm = seed;
        splitmix64(sm);
        sm ^= 0x6a09e667f3bcc909ULL + index * 0x9e3779b97f4a7c15ULL;
        splitmix64(sm);
        sm ^= 0xbb67ae8584caa73bULL + tag * 0xc2b2ae3d27d4eb4fULL;
        return Rng(splitmix64(sm));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    long uniform_int(long lo, long hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<long>(next_u64() % span);
    }

    /// Standard normal via Box-Muller on the hand-rolled uniforms.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double twopi = 6.283185307179586476925286766559;
        spare_ = r * std::sin(twopi * u2);
        have_spare_ = true;
        return r * std::cos(twopi * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace cbl
