#include "lutdn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lutdn/errors.hpp"
#include "lutdn/noise.hpp"
#include "lutdn/rng.hpp"

namespace lutdn {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Field {
    int n = 0;
    std::vector<double> v;
    explicit Field(int size) : n(size), v(static_cast<size_t>(size) * size, 0.0) {}
    double& at(int y, int x) { return v[static_cast<size_t>(y) * n + x]; }
    double at(int y, int x) const { return v[static_cast<size_t>(y) * n + x]; }
};

// bilinear value noise from a (cells+1)^2 random grid
Field value_noise(Rng& rng, int size, int cells) {
    std::vector<double> grid(static_cast<size_t>(cells + 1) * (cells + 1));
    for (double& g : grid) g = rng.uniform53();
    Field f(size);
    for (int y = 0; y < size; ++y) {
        const double fy = static_cast<double>(y) * cells / size;
        const int gy = static_cast<int>(fy);
        const double ty = fy - gy;
        for (int x = 0; x < size; ++x) {
            const double fx = static_cast<double>(x) * cells / size;
            const int gx = static_cast<int>(fx);
            const double tx = fx - gx;
            const double a = grid[static_cast<size_t>(gy) * (cells + 1) + gx];
            const double b = grid[static_cast<size_t>(gy) * (cells + 1) + gx + 1];
            const double c = grid[static_cast<size_t>(gy + 1) * (cells + 1) + gx];
            const double d = grid[static_cast<size_t>(gy + 1) * (cells + 1) + gx + 1];
            f.at(y, x) = (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
        }
    }
    return f;
}

Field multi_octave(Rng& rng, int size, int base_cells, int octaves) {
    Field acc(size);
    double amp = 1.0, total = 0.0;
    int cells = base_cells;
    for (int o = 0; o < octaves; ++o) {
        const Field f = value_noise(rng, size, cells);
        for (size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += amp * f.v[i];
        total += amp;
        amp *= 0.5;
        cells = std::min(cells * 2, size / 2);
    }
    for (double& x : acc.v) x /= total;
    return acc;
}

void normalize01(Field& f) {
    double lo = f.v[0], hi = f.v[0];
    for (double x : f.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
    for (double& x : f.v) x = (x - lo) / span;
}

double clamp01d(double x) { return x < 0 ? 0 : (x > 1 ? 1 : x); }

// The structural field of each recipe, in [0,1].
Field recipe_field(int recipe, Rng& rng, int size) {
    Field f(size);
    switch (recipe) {
        case 0: {  // linear ramps plus soft blobs
            const double ax = rng.uniform53() * 2 - 1, ay = rng.uniform53() * 2 - 1;
            Field blob = multi_octave(rng, size, 3, 2);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    f.at(y, x) = 0.5 + 0.5 * (ax * (2.0 * x / size - 1) +
                                              ay * (2.0 * y / size - 1)) / (std::abs(ax) +
                                                                            std::abs(ay) + 1e-9) +
                                 0.35 * (blob.at(y, x) - 0.5);
            normalize01(f);
            break;
        }
        case 1: {  // off-center radial falloff with angular wobble
            const double cy = size * (0.3 + 0.4 * rng.uniform53());
            const double cx = size * (0.3 + 0.4 * rng.uniform53());
            const double wob = 0.1 + 0.15 * rng.uniform53();
            const double phase = rng.uniform53() * 2 * kPi;
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const double dy = y - cy, dx = x - cx;
                    const double rr = std::sqrt(dy * dy + dx * dx) / (0.75 * size);
                    const double th = std::atan2(dy, dx);
                    f.at(y, x) = 1.0 - rr * (1.0 + wob * std::sin(5 * th + phase));
                }
            normalize01(f);
            break;
        }
        case 2: {  // plasma
            f = multi_octave(rng, size, 4, 4);
            normalize01(f);
            break;
        }
        case 3: {  // checkerboard, flat bimodal cells
            const int block = 14 + static_cast<int>(rng.bounded(12));
            std::vector<double> jitter(64);
            for (double& j : jitter) j = rng.uniform53();
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const int by = y / block, bx = x / block;
                    const bool dark = ((by + bx) & 1) == 0;
                    const double j = jitter[static_cast<size_t>((by * 21 + bx * 13) % 64)];
                    f.at(y, x) = dark ? 0.04 + 0.12 * j : 0.84 + 0.14 * j;
                }
            break;
        }
        case 4: {  // sinusoidal stripes
            const double freq = 3.0 + 5.0 * rng.uniform53();
            const double ang = rng.uniform53() * kPi;
            const double phase = rng.uniform53() * 2 * kPi;
            const double kx = std::cos(ang) * freq, ky = std::sin(ang) * freq;
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const double s =
                        std::sin(2 * kPi * (kx * x + ky * y) / size + phase);
                    f.at(y, x) = 0.5 + 0.5 * s;
                }
            break;
        }
        case 5: {  // voronoi mosaic, flat cells
            const int sites = 14 + static_cast<int>(rng.bounded(8));
            std::vector<double> sy(sites), sx(sites), sv(sites);
            for (int i = 0; i < sites; ++i) {
                sy[static_cast<size_t>(i)] = rng.uniform53() * size;
                sx[static_cast<size_t>(i)] = rng.uniform53() * size;
                const double u = rng.uniform53();
                sv[static_cast<size_t>(i)] = u < 0.4 ? 0.06 + 0.2 * rng.uniform53()
                                                     : 0.35 + 0.62 * rng.uniform53();
            }
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    double best = 1e18;
                    int bi = 0;
                    for (int i = 0; i < sites; ++i) {
                        const double dy = y - sy[static_cast<size_t>(i)];
                        const double dx = x - sx[static_cast<size_t>(i)];
                        const double d = dy * dy + dx * dx;
                        if (d < best) {
                            best = d;
                            bi = i;
                        }
                    }
                    f.at(y, x) = sv[static_cast<size_t>(bi)];
                }
            break;
        }
        case 6: {  // horizon scene: sky ramp, flat ground, rectangles, disc
            const int horizon = static_cast<int>(size * (0.35 + 0.25 * rng.uniform53()));
            const double ground = 0.18 + 0.1 * rng.uniform53();
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    f.at(y, x) = y < horizon
                                     ? 0.95 - 0.45 * (static_cast<double>(y) / horizon)
                                     : ground;
            const int rects = 3 + static_cast<int>(rng.bounded(3));
            for (int i = 0; i < rects; ++i) {
                const int ry = static_cast<int>(rng.bounded(static_cast<uint32_t>(size * 3 / 4)));
                const int rx = static_cast<int>(rng.bounded(static_cast<uint32_t>(size * 3 / 4)));
                const int rh = 10 + static_cast<int>(rng.bounded(static_cast<uint32_t>(size / 3)));
                const int rw = 10 + static_cast<int>(rng.bounded(static_cast<uint32_t>(size / 3)));
                const double v = 0.05 + 0.85 * rng.uniform53();
                for (int y = ry; y < std::min(size, ry + rh); ++y)
                    for (int x = rx; x < std::min(size, rx + rw); ++x) f.at(y, x) = v;
            }
            const double cy = rng.uniform53() * horizon * 0.8;
            const double cx = rng.uniform53() * size;
            const double rad = size * (0.06 + 0.05 * rng.uniform53());
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    if ((y - cy) * (y - cy) + (x - cx) * (x - cx) < rad * rad)
                        f.at(y, x) = 0.98;
            break;
        }
        case 7: {  // stripes modulated by noise
            Field vn = multi_octave(rng, size, 3, 3);
            normalize01(vn);
            const double freq = 4.0 + 4.0 * rng.uniform53();
            const double ang = rng.uniform53() * kPi;
            const double kx = std::cos(ang) * freq, ky = std::sin(ang) * freq;
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const double s = std::sin(2 * kPi * (kx * x + ky * y) / size);
                    f.at(y, x) = 0.5 + 0.42 * s * (0.35 + 0.65 * vn.at(y, x)) +
                                 0.16 * (vn.at(y, x) - 0.5);
                }
            normalize01(f);
            break;
        }
        default:
            throw ConfigError("texture recipe must be 0.." +
                              std::to_string(kTextureRecipes - 1));
    }
    return f;
}

}  // namespace

ImageU8 generate_texture(int recipe, uint64_t seed, int size) {
    if (size < 16) throw ConfigError("texture size must be >= 16");
    Rng rng(seed * 1000003ull + static_cast<uint64_t>(recipe));
    const Field f = recipe_field(recipe, rng, size);

    // correlated palette: dark and light anchors share the structure field,
    // so all three channels move together with a mild hue difference
    double dark[3], light[3];
    const double dbase = 0.02 + 0.06 * rng.uniform53();
    const double lbase = 0.92 + 0.06 * rng.uniform53();
    for (int c = 0; c < 3; ++c) {
        dark[c] = clamp01d(dbase + 0.10 * rng.uniform53());
        light[c] = clamp01d(lbase - 0.12 * rng.uniform53());
    }

    // chroma detail keeps channels from being exact affine copies
    Rng crng(seed ^ 0x9e3779b97f4a7c15ull);
    Field detail = multi_octave(crng, size, 6, 2);
    normalize01(detail);

    // contrast push drives a real fraction of pixels into saturation, which
    // is what puts the sigma=25 noisy baseline near its natural-image level
    const double gain = 1.35;

    ImageU8 img(size, size, 3);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double t = clamp01d((f.at(y, x) - 0.5) * gain + 0.5);
            const double d = 0.08 * (detail.at(y, x) - 0.5);
            for (int c = 0; c < 3; ++c) {
                const double chroma = c == 0 ? d : (c == 2 ? -d : 0.25 * d);
                const double v = dark[c] + (light[c] - dark[c]) * t + chroma;
                img.at(c, y, x) = clamp_u8(255.0 * clamp01d(v));
            }
        }
    return img;
}

}  // namespace lutdn
