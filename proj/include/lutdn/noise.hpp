#pragma once

#include <cmath>
#include <cstdint>

#include "lutdn/image.hpp"
#include "lutdn/rng.hpp"

namespace lutdn {

// Synthetic degradation applied to clean training/eval images.
// Channels draw independent Gaussian samples; sigma is in 0..255 units.
struct NoiseSpec {
    double sigma = 25.0;
};

inline uint8_t clamp_u8(double v) {
    if (v <= 0.0) return 0;
    if (v >= 255.0) return 255;
    return static_cast<uint8_t>(std::lround(v));
}

// Draws channel-major so a given (seed, shape) always yields the same field.
inline ImageU8 add_noise(const ImageU8& img, const NoiseSpec& spec, Rng& rng) {
    ImageU8 out = img;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = clamp_u8(static_cast<double>(img.data[i]) + spec.sigma * rng.gaussian());
    return out;
}

}  // namespace lutdn
