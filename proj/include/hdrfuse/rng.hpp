#pragma once

#include <cstdint>
#include <cmath>

namespace hdrfuse {

// SplitMix64: 64-bit-state deterministic generator (Steele, Lea & Flood 2014).
// Used for every random decision in the toolkit so that runs are reproducible
// bit-for-bit across platforms; std::random distributions are avoided because
// their output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller. Both values of the pair are consumed
    // so the stream stays aligned regardless of call pattern.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Normal truncated to +/- 2 sigma by rejection.
    double truncated_normal(double stddev) {
        double v = normal() * stddev;
        while (std::fabs(v) > 2.0 * stddev) v = normal() * stddev;
        return v;
    }

    // Derives an independent stream: hashes (seed, stream id) through the
    // same mixer so sub-streams never overlap by construction.
    static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
        Rng mixer(seed ^ (0xA0761D6478BD642FULL * (stream_id + 1)));
        return Rng(mixer.next_u64());
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace hdrfuse
