#pragma once

#include <array>
#include <cstdint>

namespace lutdn {

// Lattice geometry shared by every table: 17 levels per axis, 16 apart.
inline constexpr int kLevels = 17;
inline constexpr int kInterval = 16;

// cell = p div 16 in [0,15], frac = p mod 16 in [0,15].
struct LatticeCoord {
    int cell;
    int frac;
};

inline LatticeCoord quantize(uint8_t p) { return {p >> 4, p & 15}; }

// The simplex containing a fractional point, as the standard sorted-fraction
// construction: sort frac descending (stable by axis), walk from the cell
// origin adding one +1 axis step per rank. Weights are integers summing to
// the interval, so interpolation stays in exact integer arithmetic.
struct Simplex {
    int dims;
    std::array<int, 4> order;    // axis indices, descending frac
    std::array<int, 5> weights;  // dims+1 entries, sum == 16
};

inline Simplex simplex_weights(const int* frac, int dims) {
    Simplex s;
    s.dims = dims;
    for (int i = 0; i < dims; ++i) s.order[i] = i;
    // insertion sort, stable: equal fracs keep ascending axis order
    for (int i = 1; i < dims; ++i) {
        const int ax = s.order[i];
        int j = i;
        while (j > 0 && frac[s.order[j - 1]] < frac[ax]) {
            s.order[j] = s.order[j - 1];
            --j;
        }
        s.order[j] = ax;
    }
    s.weights[0] = kInterval - frac[s.order[0]];
    for (int i = 0; i + 1 < dims; ++i)
        s.weights[i + 1] = frac[s.order[i]] - frac[s.order[i + 1]];
    s.weights[dims] = frac[s.order[dims - 1]];
    return s;
}

// Vertex j of the simplex as a 0/1 offset per axis (vertex 0 = cell origin).
inline std::array<int, 4> simplex_vertex(const Simplex& s, int j) {
    std::array<int, 4> off = {0, 0, 0, 0};
    for (int i = 0; i < j; ++i) off[s.order[i]] = 1;
    return off;
}

// Weighted sum of the dims+1 vertex values (caller gathers them); dividing by
// 16 with a single final rounding is the caller's job so sums can be pooled
// across rotations and blocks first.
inline int64_t simplex_raw(const Simplex& s, const int* vertex_values) {
    int64_t acc = 0;
    for (int j = 0; j <= s.dims; ++j)
        acc += static_cast<int64_t>(s.weights[j]) * vertex_values[j];
    return acc;
}

// round-half-away-from-zero, exact in integers
inline int64_t div_round_half_away(int64_t num, int64_t den) {
    if (num >= 0) return (num + den / 2) / den;
    return -((-num + den / 2) / den);
}

}  // namespace lutdn
