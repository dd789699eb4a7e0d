#pragma once

#include <cstdint>

#include "lutdn/image.hpp"

namespace lutdn {

// Synthetic channel-correlated test textures: piecewise-smooth fields with
// edges, written around a shared luminance field so the RGB planes correlate
// the way photographic content does. Recipes 0..7; any seed is valid.
inline constexpr int kTextureRecipes = 8;

ImageU8 generate_texture(int recipe, uint64_t seed, int size);

}  // namespace lutdn
