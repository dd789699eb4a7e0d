#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lutdn/interp.hpp"
#include "lutdn/micronet.hpp"

namespace lutdn {

// What a table entry means. feature/direct entries are unsigned bytes in
// pixel units; residual entries are signed bytes added to an anchor pixel.
enum class Semantics : uint8_t { feature = 0, residual = 1, direct = 2 };

const char* semantics_name(Semantics s);
Semantics semantics_from_name(const std::string& name);

// D-dimensional table over the 17^D lattice, out_slots outputs per point.
// Entries are kept widened to int16 in memory; files store one byte each.
struct LutTable {
    int dims = 0;  // 3 or 4
    int out_slots = 1;
    Semantics semantics = Semantics::feature;
    std::string id;
    std::vector<int16_t> entries;  // lattice row-major, slot-minor

    size_t lattice_count() const {
        size_t n = 1;
        for (int i = 0; i < dims; ++i) n *= kLevels;
        return n;
    }
    size_t lattice_stride(int axis) const {
        size_t s = 1;
        for (int i = axis + 1; i < dims; ++i) s *= kLevels;
        return s;
    }
    void validate() const;
};

// Raw interpolated sums (denominator 16) for one probe, one per slot.
// Pooling these across rotations/blocks before the single final rounding is
// what keeps LUT mode within one level of float mode.
inline void lookup_raw(const LutTable& t, const uint8_t* p, int64_t* raw) {
    int frac[4];
    size_t base = 0;
    for (int i = 0; i < t.dims; ++i) {
        const LatticeCoord lc = quantize(p[i]);
        frac[i] = lc.frac;
        base += static_cast<size_t>(lc.cell) * t.lattice_stride(i);
    }
    const Simplex s = simplex_weights(frac, t.dims);
    const int slots = t.out_slots;
    for (int k = 0; k < slots; ++k) raw[k] = 0;
    size_t lat = base;
    for (int j = 0; j <= t.dims; ++j) {
        if (j > 0) lat += t.lattice_stride(s.order[j - 1]);
        const int16_t* e = t.entries.data() + lat * slots;
        const int64_t w = s.weights[j];
        for (int k = 0; k < slots; ++k) raw[k] += w * e[k];
    }
}

// Rounded per-slot lookup: round(sum/16) half away from zero.
void interpolate(const LutTable& t, const uint8_t* p, int* out);

// ---------------------------------------------------------------------------
// Baking: exhaustively traverse the 17^D lattice (top level probes at byte
// value 255 since 256 is unreachable), run the float block, quantize outputs
// to the entry semantics. Probe batches of 4096 keep the dense kernels busy.

int16_t quantize_entry(float y, Semantics s);

LutTable bake(const Mlp<float>& block, int dims, int out_slots, Semantics sem,
              const std::string& id);
LutTable bake_serial(const Mlp<float>& block, int dims, int out_slots, Semantics sem,
                     const std::string& id);

// ---------------------------------------------------------------------------
// Storage law: a k x k x c receptive field indexes 17^(k*k*c) points at one
// byte per entry. Exact arbitrary-precision byte count plus SI-decimal units.

struct LutSize {
    int dims = 0;
    std::string bytes_exact;  // exact decimal integer
    std::string human;        // e.g. "582.6 TB"
    bool fits_u64 = false;
    uint64_t bytes_u64 = 0;   // valid when fits_u64
};

LutSize lut_size_dims(int dims);
LutSize lut_size_bytes(int k, int c);
std::string human_bytes(double bytes);

// ---------------------------------------------------------------------------
// Binary format (.dnlt): magic "DNLT", version u16, dims u8, levels u8,
// out_slots u16, semantics u8, id (u16 length + bytes), raw entries
// (one byte each; residual entries are two's-complement signed).

std::vector<uint8_t> serialize(const LutTable& t);
LutTable deserialize(const std::vector<uint8_t>& bytes);

void save_table(const std::string& path, const LutTable& t);
LutTable load_table(const std::string& path);

}  // namespace lutdn
