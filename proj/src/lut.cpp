#include "lutdn/lut.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "lutdn/errors.hpp"

namespace lutdn {

const char* semantics_name(Semantics s) {
    switch (s) {
        case Semantics::feature: return "feature";
        case Semantics::residual: return "residual";
        case Semantics::direct: return "direct";
    }
    return "?";
}

Semantics semantics_from_name(const std::string& name) {
    if (name == "feature") return Semantics::feature;
    if (name == "residual") return Semantics::residual;
    if (name == "direct") return Semantics::direct;
    throw ConfigError("unknown table semantics '" + name + "'");
}

void LutTable::validate() const {
    if (dims != 3 && dims != 4)
        throw ConfigError("table " + id + ": dims must be 3 or 4, got " + std::to_string(dims));
    if (out_slots < 1 || out_slots > 8)
        throw ConfigError("table " + id + ": out_slots must be in 1..8");
    if (entries.size() != lattice_count() * static_cast<size_t>(out_slots))
        throw ConfigError("table " + id + ": entry count does not match 17^dims * slots");
    const int lo = semantics == Semantics::residual ? -128 : 0;
    const int hi = semantics == Semantics::residual ? 127 : 255;
    for (int16_t e : entries)
        if (e < lo || e > hi)
            throw ConfigError("table " + id + ": entry out of range for its semantics");
}

void interpolate(const LutTable& t, const uint8_t* p, int* out) {
    int64_t raw[8];
    lookup_raw(t, p, raw);
    for (int k = 0; k < t.out_slots; ++k)
        out[k] = static_cast<int>(div_round_half_away(raw[k], kInterval));
}

int16_t quantize_entry(float y, Semantics s) {
    const long v = std::lround(static_cast<double>(y) * 255.0);
    if (s == Semantics::residual)
        return static_cast<int16_t>(std::min(127L, std::max(-128L, v)));
    return static_cast<int16_t>(std::min(255L, std::max(0L, v)));
}

namespace {

constexpr int kBakeBatch = 4096;

template <bool Parallel>
LutTable bake_impl(const Mlp<float>& block, int dims, int out_slots, Semantics sem,
                   const std::string& id) {
    if (dims < 1 || dims > 4)
        throw ConfigError("bake: table dims must be 1..4, got " + std::to_string(dims));
    if (block.in_arity() != dims)
        throw ConfigError("bake: block arity " + std::to_string(block.in_arity()) +
                          " does not match table dims " + std::to_string(dims));
    if (block.out_count() != out_slots)
        throw ConfigError("bake: block outputs " + std::to_string(block.out_count()) +
                          " slots, table wants " + std::to_string(out_slots));
    LutTable t;
    t.dims = dims;
    t.out_slots = out_slots;
    t.semantics = sem;
    t.id = id;
    const size_t total = t.lattice_count();
    t.entries.assign(total * out_slots, 0);

    Mat<float> out;
    int coord[4] = {0, 0, 0, 0};
    size_t done = 0;
    while (done < total) {
        const int m = static_cast<int>(std::min<size_t>(kBakeBatch, total - done));
        Mat<float> probe(dims, m);
        // lattice row-major: last axis fastest
        for (int j = 0; j < m; ++j) {
            for (int i = 0; i < dims; ++i)
                probe.at(i, j) = static_cast<float>(std::min(coord[i] * kInterval, 255) / 255.0);
            for (int i = dims - 1; i >= 0; --i) {
                if (++coord[i] < kLevels) break;
                coord[i] = 0;
            }
        }
        if constexpr (Parallel)
            block.infer(probe, out);
        else
            block.infer_serial(probe, out);
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < out_slots; ++k)
                t.entries[(done + j) * out_slots + k] = quantize_entry(out.at(k, j), sem);
        done += m;
    }
    return t;
}

}  // namespace

LutTable bake(const Mlp<float>& block, int dims, int out_slots, Semantics sem,
              const std::string& id) {
    return bake_impl<true>(block, dims, out_slots, sem, id);
}

LutTable bake_serial(const Mlp<float>& block, int dims, int out_slots, Semantics sem,
                     const std::string& id) {
    return bake_impl<false>(block, dims, out_slots, sem, id);
}

// ---------------------------------------------------------------------------
// Storage accounting.

namespace {

// decimal-string multiply by a small integer; exact for any dims
std::string decimal_mul(const std::string& dec, int factor) {
    std::string out;
    out.reserve(dec.size() + 3);
    int carry = 0;
    for (int i = static_cast<int>(dec.size()) - 1; i >= 0; --i) {
        const int d = (dec[i] - '0') * factor + carry;
        out.push_back(static_cast<char>('0' + d % 10));
        carry = d / 10;
    }
    while (carry) {
        out.push_back(static_cast<char>('0' + carry % 10));
        carry /= 10;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

}  // namespace

std::string human_bytes(double bytes) {
    static const char* units[] = {"B", "KB", "MB", "GB", "TB", "PB", "EB", "ZB", "YB"};
    int u = 0;
    while (bytes >= 1000.0 && u < 8) {
        bytes /= 1000.0;
        ++u;
    }
    char buf[48];
    if (u == 0)
        std::snprintf(buf, sizeof(buf), "%.0f B", bytes);
    else
        std::snprintf(buf, sizeof(buf), "%.1f %s", bytes, units[u]);
    return buf;
}

LutSize lut_size_dims(int dims) {
    if (dims < 1) throw ConfigError("lut size: dims must be >= 1");
    LutSize r;
    r.dims = dims;
    std::string dec = "1";
    double approx = 1.0;
    uint64_t u64 = 1;
    bool fits = true;
    for (int i = 0; i < dims; ++i) {
        dec = decimal_mul(dec, 17);
        approx *= 17.0;
        if (fits && u64 <= UINT64_MAX / 17)
            u64 *= 17;
        else
            fits = false;
    }
    r.bytes_exact = dec;
    r.human = human_bytes(approx);
    r.fits_u64 = fits;
    r.bytes_u64 = fits ? u64 : 0;
    return r;
}

LutSize lut_size_bytes(int k, int c) {
    if (k < 1 || c < 1) throw ConfigError("lut size: k and c must be >= 1");
    return lut_size_dims(k * k * c);
}

// ---------------------------------------------------------------------------
// Serialization.

namespace {

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v & 0xff));
    b.push_back(static_cast<uint8_t>(v >> 8));
}

struct Reader {
    const std::vector<uint8_t>& b;
    size_t pos = 0;
    uint8_t u8(const char* what) {
        if (pos >= b.size()) throw IoError(std::string("dnlt: truncated at ") + what);
        return b[pos++];
    }
    uint16_t u16(const char* what) {
        const uint16_t lo = u8(what), hi = u8(what);
        return static_cast<uint16_t>(lo | (hi << 8));
    }
};

}  // namespace

std::vector<uint8_t> serialize(const LutTable& t) {
    t.validate();
    std::vector<uint8_t> b;
    b.reserve(16 + t.id.size() + t.entries.size());
    b.insert(b.end(), {'D', 'N', 'L', 'T'});
    put_u16(b, 1);  // version
    b.push_back(static_cast<uint8_t>(t.dims));
    b.push_back(static_cast<uint8_t>(kLevels));
    put_u16(b, static_cast<uint16_t>(t.out_slots));
    b.push_back(static_cast<uint8_t>(t.semantics));
    if (t.id.size() > 0xffff) throw ConfigError("dnlt: table id too long");
    put_u16(b, static_cast<uint16_t>(t.id.size()));
    b.insert(b.end(), t.id.begin(), t.id.end());
    for (int16_t e : t.entries)
        b.push_back(static_cast<uint8_t>(static_cast<int8_t>(e)));  // s8/u8 share the byte
    return b;
}

LutTable deserialize(const std::vector<uint8_t>& bytes) {
    Reader r{bytes};
    char magic[4];
    for (char& m : magic) m = static_cast<char>(r.u8("magic"));
    if (std::memcmp(magic, "DNLT", 4) != 0) throw IoError("dnlt: bad magic");
    const uint16_t version = r.u16("version");
    if (version != 1) throw IoError("dnlt: unsupported version " + std::to_string(version));
    LutTable t;
    t.dims = r.u8("dims");
    const int levels = r.u8("levels");
    if (levels != kLevels)
        throw IoError("dnlt: unsupported levels-per-dim " + std::to_string(levels));
    t.out_slots = r.u16("out_slots");
    const uint8_t sem = r.u8("semantics");
    if (sem > 2) throw IoError("dnlt: bad semantics tag " + std::to_string(sem));
    t.semantics = static_cast<Semantics>(sem);
    const uint16_t idlen = r.u16("id length");
    t.id.resize(idlen);
    for (uint16_t i = 0; i < idlen; ++i) t.id[i] = static_cast<char>(r.u8("id"));
    if (t.dims < 1 || t.dims > 4) throw IoError("dnlt: dims out of range");
    const size_t count = t.lattice_count() * static_cast<size_t>(t.out_slots);
    if (bytes.size() - r.pos != count)
        throw IoError("dnlt: entry payload is " + std::to_string(bytes.size() - r.pos) +
                      " bytes, expected " + std::to_string(count));
    t.entries.resize(count);
    for (size_t i = 0; i < count; ++i) {
        const uint8_t raw = bytes[r.pos + i];
        t.entries[i] = t.semantics == Semantics::residual
                           ? static_cast<int16_t>(static_cast<int8_t>(raw))
                           : static_cast<int16_t>(raw);
    }
    t.validate();
    return t;
}

void save_table(const std::string& path, const LutTable& t) {
    const std::vector<uint8_t> b = serialize(t);
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot create " + path);
    const size_t n = std::fwrite(b.data(), 1, b.size(), f);
    std::fclose(f);
    if (n != b.size()) throw IoError("short write to " + path);
}

LutTable load_table(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path);
    std::fseek(f, 0, SEEK_END);
    const long sz = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<uint8_t> b(static_cast<size_t>(sz));
    const size_t n = std::fread(b.data(), 1, b.size(), f);
    std::fclose(f);
    if (n != b.size()) throw IoError("short read from " + path);
    try {
        return deserialize(b);
    } catch (const IoError& e) {
        throw IoError(std::string(e.what()) + " (" + path + ")");
    }
}

}  // namespace lutdn
