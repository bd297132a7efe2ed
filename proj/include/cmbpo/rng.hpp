#pragma once

#include <cmath>
#include <cstdint>

namespace cmbpo {

/// Seedable counter-based pseudo-random stream (SplitMix64 core).
/// Identical seed gives an identical draw sequence; independent
/// sub-streams are derived with split().
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Standard normal via Box-Muller; consumes exactly two draws.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        // Guard against log(0).
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) {
        return mean + stddev * normal();
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Multiply-shift; bias is negligible for n << 2^64.
        unsigned __int128 m =
            static_cast<unsigned __int128>(next_u64()) * n;
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Derive an independent sub-stream labeled by `stream`.
    /// Does not advance this stream.
    Rng split(std::uint64_t stream) const {
        std::uint64_t z = state_ ^ (0xD1B54A32D192ED03ULL * (stream + 1));
        z = (z ^ (z >> 29)) * 0xFF51AFD7ED558CCDULL;
        z = (z ^ (z >> 32)) * 0xC4CEB9FE1A85EC53ULL;
        return Rng(z ^ (z >> 29));
    }

    std::uint64_t cursor() const { return state_; }
    void set_cursor(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

}  // namespace cmbpo
