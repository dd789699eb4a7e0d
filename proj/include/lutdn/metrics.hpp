#pragma once

#include "lutdn/image.hpp"

namespace lutdn {

// Color PSNR: MSE pooled over all channels and pixels, 10*log10(255^2 / mse).
// Identical images return +infinity.
double cpsnr(const ImageU8& a, const ImageU8& b);

// Single-scale SSIM with the standard constants: 11x11 Gaussian window,
// sigma 1.5, K1 = 0.01, K2 = 0.03, L = 255. Windows are valid-mode (no
// padding); the per-window map is averaged per channel, then over channels.
double ssim(const ImageU8& a, const ImageU8& b);

}  // namespace lutdn
