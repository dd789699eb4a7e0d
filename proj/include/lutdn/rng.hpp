#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lutdn {

// Deterministic random stream used everywhere randomness is needed.
//
// Engine: std::mt19937 (fully specified by the C++ standard, so the raw
// 32-bit word stream is identical on every platform). Distributions are
// built here by hand because the std::*_distribution adapters are not
// bit-portable.
//
// Stream layout:
//   u32()        consumes 1 word
//   uniform53()  consumes 2 words (53-bit mantissa double in [0,1))
//   gaussian()   consumes 4 words per *pair*; values are handed out
//                alternately (Box-Muller, cosine branch first)
//   bounded(n)   consumes 1 word
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

    uint32_t u32() { return engine_(); }

    // 53-bit uniform double in [0,1).
    double uniform53() {
        const uint64_t hi = u32() >> 6;  // 26 bits
        const uint64_t lo = u32() >> 5;  // 27 bits
        return (static_cast<double>(hi) * 134217728.0 + static_cast<double>(lo)) *
               (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform53(); }

    // Standard normal via Box-Muller. One pair per 4 engine words.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform53();
        // u1 must be > 0 for the log; the 53-bit grid makes 0 possible.
        while (u1 <= 0.0) u1 = uniform53();
        const double u2 = uniform53();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Integer in [0, n). Plain modulo; bias is immaterial for n << 2^32.
    uint32_t bounded(uint32_t n) { return n ? u32() % n : 0; }

private:
    std::mt19937 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace lutdn
