#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lutdn/interp.hpp"
#include "lutdn/rng.hpp"

using namespace lutdn;

TEST_CASE("quantize splits a byte into cell and frac") {
    CHECK(quantize(0).cell == 0);
    CHECK(quantize(0).frac == 0);
    CHECK(quantize(37).cell == 2);   // 37 = 2*16 + 5
    CHECK(quantize(37).frac == 5);
    CHECK(quantize(16).cell == 1);
    CHECK(quantize(16).frac == 0);
    CHECK(quantize(255).cell == 15);
    CHECK(quantize(255).frac == 15);
}

TEST_CASE("weights sum to 16: exhaustive 3D") {
    for (int a = 0; a < 16; ++a)
        for (int b = 0; b < 16; ++b)
            for (int c = 0; c < 16; ++c) {
                const int frac[3] = {a, b, c};
                const Simplex s = simplex_weights(frac, 3);
                int sum = 0;
                for (int j = 0; j <= 3; ++j) {
                    CHECK(s.weights[j] >= 0);
                    sum += s.weights[j];
                }
                CHECK(sum == 16);
            }
}

TEST_CASE("weights sum to 16: 1e5 random 4D") {
    Rng rng(42);
    for (int it = 0; it < 100000; ++it) {
        int frac[4];
        for (int& f : frac) f = static_cast<int>(rng.bounded(16));
        const Simplex s = simplex_weights(frac, 4);
        int sum = 0;
        for (int j = 0; j <= 4; ++j) {
            CHECK(s.weights[j] >= 0);
            sum += s.weights[j];
        }
        REQUIRE(sum == 16);
    }
}

TEST_CASE("equal fracs collapse interior weights: (8,8,8) -> (8,0,0,8)") {
    const int frac[3] = {8, 8, 8};
    const Simplex s = simplex_weights(frac, 3);
    CHECK(s.weights[0] == 8);
    CHECK(s.weights[1] == 0);
    CHECK(s.weights[2] == 0);
    CHECK(s.weights[3] == 8);
    // stable: ties keep ascending axis order
    CHECK(s.order[0] == 0);
    CHECK(s.order[1] == 1);
    CHECK(s.order[2] == 2);
}

TEST_CASE("hand-worked 4D case: frac (12,3,7,3)") {
    // descending fracs: axis0(12), axis2(7), axis1(3), axis3(3); weights are
    // 16-12, 12-7, 7-3, 3-3, 3
    const int frac[4] = {12, 3, 7, 3};
    const Simplex s = simplex_weights(frac, 4);
    CHECK(s.order[0] == 0);
    CHECK(s.order[1] == 2);
    CHECK(s.order[2] == 1);
    CHECK(s.order[3] == 3);
    CHECK(s.weights[0] == 4);
    CHECK(s.weights[1] == 5);
    CHECK(s.weights[2] == 4);
    CHECK(s.weights[3] == 0);
    CHECK(s.weights[4] == 3);
}

TEST_CASE("simplex vertices form a chain adding one axis per rank") {
    Rng rng(7);
    for (int it = 0; it < 1000; ++it) {
        const int dims = 3 + static_cast<int>(rng.bounded(2));
        int frac[4];
        for (int i = 0; i < dims; ++i) frac[i] = static_cast<int>(rng.bounded(16));
        const Simplex s = simplex_weights(frac, dims);
        auto prev = simplex_vertex(s, 0);
        for (int i = 0; i < dims; ++i) CHECK(prev[i] == 0);
        for (int j = 1; j <= dims; ++j) {
            const auto cur = simplex_vertex(s, j);
            int changed = 0, ones = 0;
            for (int i = 0; i < dims; ++i) {
                changed += cur[i] != prev[i];
                ones += cur[i];
            }
            CHECK(changed == 1);
            CHECK(ones == j);
            CHECK(cur[s.order[j - 1]] == 1);
            prev = cur;
        }
    }
}

TEST_CASE("barycentric identity: sum w_j * vertex_j == 16 * point") {
    Rng rng(11);
    for (int it = 0; it < 1000; ++it) {
        const int dims = 3 + static_cast<int>(rng.bounded(2));
        int frac[4];
        for (int i = 0; i < dims; ++i) frac[i] = static_cast<int>(rng.bounded(16));
        const Simplex s = simplex_weights(frac, dims);
        for (int i = 0; i < dims; ++i) {
            int acc = 0;
            for (int j = 0; j <= dims; ++j) acc += s.weights[j] * simplex_vertex(s, j)[i];
            CHECK(acc == frac[i]);  // cell origin contributes 0
        }
    }
}

namespace {

// Interpolate a scalar function sampled on the index lattice (position of
// index c is 16*c) at byte coordinates p, using the simplex machinery the
// way lookup_raw does. Returns the rounded result.
template <class F>
int64_t simplex_eval(const uint8_t* p, int dims, F&& sample) {
    int frac[4], cell[4];
    for (int i = 0; i < dims; ++i) {
        const LatticeCoord lc = quantize(p[i]);
        frac[i] = lc.frac;
        cell[i] = lc.cell;
    }
    const Simplex s = simplex_weights(frac, dims);
    int64_t acc = 0;
    for (int j = 0; j <= dims; ++j) {
        const auto off = simplex_vertex(s, j);
        int idx[4];
        for (int i = 0; i < dims; ++i) idx[i] = cell[i] + off[i];
        acc += static_cast<int64_t>(s.weights[j]) * sample(idx);
    }
    return div_round_half_away(acc, 16);
}

}  // namespace

TEST_CASE("1D sweep equals the textbook lerp") {
    // dims=1 weights are (16-frac, frac); compare against the direct formula
    Rng rng(3);
    int e[17];
    for (int& v : e) v = static_cast<int>(rng.bounded(256));
    for (int p = 0; p < 256; ++p) {
        const uint8_t b = static_cast<uint8_t>(p);
        const int64_t got =
            simplex_eval(&b, 1, [&](const int* idx) { return e[idx[0]]; });
        const int cell = p >> 4, frac = p & 15;
        const int64_t want =
            div_round_half_away((16 - frac) * e[cell] + frac * e[cell + (frac ? 1 : 0)], 16);
        CHECK(got == want);
    }
}

TEST_CASE("lattice points hit their entry exactly") {
    Rng rng(5);
    for (int it = 0; it < 2000; ++it) {
        const int dims = 3 + static_cast<int>(rng.bounded(2));
        uint8_t p[4];
        int want = 0;
        // 16-multiples only: frac==0 means the cell-origin weight is 16
        int idx0[4];
        for (int i = 0; i < dims; ++i) {
            idx0[i] = static_cast<int>(rng.bounded(16));
            p[i] = static_cast<uint8_t>(idx0[i] * 16);
        }
        const int64_t got = simplex_eval(p, dims, [&](const int* idx) {
            int h = 0;
            for (int i = 0; i < dims; ++i) h = h * 17 + idx[i];
            if (idx[0] == idx0[0] && idx[1] == idx0[1] &&
                (dims < 3 || idx[2] == idx0[2]) && (dims < 4 || idx[3] == idx0[3]))
                want = h % 251;
            return h % 251;
        });
        CHECK(got == want);
    }
}

TEST_CASE("linear functions reproduce within one level: exhaustive 1D") {
    Rng rng(13);
    for (int fn = 0; fn < 50; ++fn) {
        const double a = rng.uniform(-1.0, 1.0);
        const double b = rng.uniform(0.0, 255.0);
        for (int p = 0; p < 256; ++p) {
            const uint8_t q = static_cast<uint8_t>(p);
            const int64_t got = simplex_eval(&q, 1, [&](const int* idx) {
                return static_cast<int>(std::lround(a * (16.0 * idx[0]) + b));
            });
            const int64_t want = std::lround(a * p + b);
            CHECK(std::llabs(got - want) <= 1);
        }
    }
}

TEST_CASE("linear functions reproduce within one level: 1e4 random 4D probes") {
    Rng rng(17);
    for (int fn = 0; fn < 20; ++fn) {
        double a[4];
        for (double& v : a) v = rng.uniform(-0.25, 0.25);
        const double b = rng.uniform(64.0, 192.0);
        for (int it = 0; it < 500; ++it) {
            uint8_t p[4];
            for (uint8_t& v : p) v = static_cast<uint8_t>(rng.bounded(256));
            const int64_t got = simplex_eval(p, 4, [&](const int* idx) {
                double y = b;
                for (int i = 0; i < 4; ++i) y += a[i] * (16.0 * idx[i]);
                return static_cast<int>(std::lround(y));
            });
            double y = b;
            for (int i = 0; i < 4; ++i) y += a[i] * p[i];
            CHECK(std::llabs(got - std::lround(y)) <= 1);
        }
    }
}

TEST_CASE("monotone entries give monotone interpolation along an axis") {
    Rng rng(19);
    int e[17];
    e[0] = 0;
    for (int i = 1; i < 17; ++i) e[i] = e[i - 1] + static_cast<int>(rng.bounded(16));
    int64_t prev = -1;
    for (int p = 0; p < 256; ++p) {
        const uint8_t b = static_cast<uint8_t>(p);
        const int64_t got =
            simplex_eval(&b, 1, [&](const int* idx) { return e[idx[0]]; });
        CHECK(got >= prev);
        prev = got;
    }
}

TEST_CASE("div_round_half_away rounds halves away from zero") {
    CHECK(div_round_half_away(3, 2) == 2);
    CHECK(div_round_half_away(-3, 2) == -2);
    CHECK(div_round_half_away(5, 4) == 1);
    CHECK(div_round_half_away(6, 4) == 2);
    CHECK(div_round_half_away(-6, 4) == -2);
    CHECK(div_round_half_away(7, 2) == 4);
    CHECK(div_round_half_away(0, 16) == 0);
    CHECK(div_round_half_away(160, 16) == 10);
}
