#include "lutdn/finetune.hpp"

#include <cmath>

#include "lutdn/errors.hpp"
#include "lutdn/interp.hpp"
#include "lutdn/metrics.hpp"
#include "lutdn/noise.hpp"
#include "lutdn/rng.hpp"

namespace lutdn {

SoftLut SoftLut::from_table(const LutTable& t) {
    SoftLut s;
    s.dims = t.dims;
    s.out_slots = t.out_slots;
    s.semantics = t.semantics;
    s.id = t.id;
    s.e.resize(t.entries.size());
    for (size_t i = 0; i < t.entries.size(); ++i) s.e[i] = t.entries[i] / 255.0;
    s.g.assign(t.entries.size(), 0.0);
    return s;
}

LutTable SoftLut::export_table() const {
    LutTable t;
    t.dims = dims;
    t.out_slots = out_slots;
    t.semantics = semantics;
    t.id = id;
    t.entries.resize(e.size());
    for (size_t i = 0; i < e.size(); ++i)
        t.entries[i] = quantize_entry(static_cast<float>(e[i]), semantics);
    t.validate();
    return t;
}

void SoftLut::project() {
    const double lo = range_lo(), hi = range_hi();
    for (double& v : e) v = v < lo ? lo : (v > hi ? hi : v);
}

namespace {

size_t soft_stride(const SoftLut& t, int axis) {
    size_t s = 1;
    for (int i = axis + 1; i < t.dims; ++i) s *= kLevels;
    return s;
}

}  // namespace

void soft_lookup(const SoftLut& t, const uint8_t* p, double* out) {
    int frac[4];
    size_t base = 0;
    for (int i = 0; i < t.dims; ++i) {
        const LatticeCoord lc = quantize(p[i]);
        frac[i] = lc.frac;
        base += static_cast<size_t>(lc.cell) * soft_stride(t, i);
    }
    const Simplex s = simplex_weights(frac, t.dims);
    for (int k = 0; k < t.out_slots; ++k) out[k] = 0.0;
    size_t lat = base;
    for (int j = 0; j <= t.dims; ++j) {
        if (j > 0) lat += soft_stride(t, s.order[j - 1]);
        const double* e = t.e.data() + lat * t.out_slots;
        const double w = s.weights[j] / 16.0;
        for (int k = 0; k < t.out_slots; ++k) out[k] += w * e[k];
    }
}

void soft_lookup_backward(SoftLut& t, const uint8_t* p, const double* dout) {
    int frac[4];
    size_t base = 0;
    for (int i = 0; i < t.dims; ++i) {
        const LatticeCoord lc = quantize(p[i]);
        frac[i] = lc.frac;
        base += static_cast<size_t>(lc.cell) * soft_stride(t, i);
    }
    const Simplex s = simplex_weights(frac, t.dims);
    size_t lat = base;
    for (int j = 0; j <= t.dims; ++j) {
        if (j > 0) lat += soft_stride(t, s.order[j - 1]);
        double* g = t.g.data() + lat * t.out_slots;
        const double w = s.weights[j] / 16.0;
        for (int k = 0; k < t.out_slots; ++k) g[k] += w * dout[k];
    }
}

// ---------------------------------------------------------------------------
// End-to-end soft evaluation of the LUT pipeline on a patch, with enough
// bookkeeping to push gradients into every table and through stage inputs.

namespace {

struct Rec {
    int32_t unit;
    int32_t out_base;
    int32_t out_px;      // unrotated y*W+x
    int32_t src[4];      // stage-input linear index (c*H + y)*W + x, per axis
    int32_t vlat[5];     // lattice index per simplex vertex
    int8_t w[5];
    int8_t ord[4];
    int8_t arity;
    int8_t slots;
};

struct SoftStage {
    std::vector<double> m;      // combined block mean, out_ch*H*W
    std::vector<uint8_t> p;     // 8-bit view (next stage's indices)
    std::vector<uint8_t> mask;  // residual: clamp01 pass-through flags
    std::vector<Rec> recs;
};

void soft_stage_forward(const PipelinePlan& plan, int si, const std::vector<SoftLut>& softs,
                        const std::vector<uint8_t>& in_p, const ImageU8& anchor, int h, int w,
                        SoftStage& st) {
    const StagePlan& sp = plan.stages[static_cast<size_t>(si)];
    const int rotations = sp.ensemble ? 4 : 1;
    const size_t plane = static_cast<size_t>(h) * w;
    st.m.assign(static_cast<size_t>(sp.out_channels) * plane, 0.0);
    st.recs.clear();

    for (int r = 0; r < rotations; ++r) {
        const int rh = (r % 2 == 0) ? h : w;
        const int rw = (r % 2 == 0) ? w : h;
        for (const UnitEval& ev : sp.evals) {
            const SoftLut& t = softs[static_cast<size_t>(ev.unit)];
            const int arity = t.dims, slots = t.out_slots;
            for (int yr = 0; yr < rh; ++yr)
                for (int xr = 0; xr < rw; ++xr) {
                    Rec rec;
                    rec.unit = ev.unit;
                    rec.out_base = ev.out_base;
                    rec.arity = static_cast<int8_t>(arity);
                    rec.slots = static_cast<int8_t>(slots);
                    uint8_t p[4];
                    int frac[4];
                    size_t base = 0;
                    for (int i = 0; i < arity; ++i) {
                        const Tap tap = ev.taps[static_cast<size_t>(i)];
                        const int yy = std::min(yr + tap.dy, rh - 1);
                        const int xx = std::min(xr + tap.dx, rw - 1);
                        const SrcCoord sc = inv_rotate(r, yy, xx, h, w);
                        const size_t src =
                            (static_cast<size_t>(tap.channel) * h + sc.y) * w + sc.x;
                        rec.src[i] = static_cast<int32_t>(src);
                        p[i] = in_p[src];
                        const LatticeCoord lc = quantize(p[i]);
                        frac[i] = lc.frac;
                        base += static_cast<size_t>(lc.cell) * soft_stride(t, i);
                    }
                    const Simplex s = simplex_weights(frac, arity);
                    size_t lat = base;
                    for (int j = 0; j <= arity; ++j) {
                        if (j > 0) lat += soft_stride(t, s.order[j - 1]);
                        rec.vlat[j] = static_cast<int32_t>(lat);
                        rec.w[j] = static_cast<int8_t>(s.weights[j]);
                    }
                    for (int i = 0; i < arity; ++i)
                        rec.ord[i] = static_cast<int8_t>(s.order[i]);
                    const SrcCoord o = inv_rotate(r, yr, xr, h, w);
                    rec.out_px = static_cast<int32_t>(static_cast<size_t>(o.y) * w + o.x);
                    for (int k = 0; k < slots; ++k) {
                        double acc = 0.0;
                        for (int j = 0; j <= arity; ++j)
                            acc += rec.w[j] *
                                   t.e[static_cast<size_t>(rec.vlat[j]) * slots + k];
                        st.m[(static_cast<size_t>(ev.out_base) + k) * plane +
                             static_cast<size_t>(rec.out_px)] += acc / 16.0;
                    }
                    st.recs.push_back(rec);
                }
        }
    }
    const double inv = 1.0 / (rotations * sp.contributions);
    for (double& v : st.m) v *= inv;

    // 8-bit view for the next stage's indices, mirroring the hard path:
    // feature -> round(255m); residual -> clamp(anchor + round(255m))
    st.p.resize(st.m.size());
    if (sp.semantics == Semantics::residual) {
        st.mask.assign(st.m.size(), 1);
        for (int c = 0; c < sp.out_channels; ++c)
            for (size_t px = 0; px < plane; ++px) {
                const size_t i = static_cast<size_t>(c) * plane + px;
                const int a = anchor.data[static_cast<size_t>(c) * plane + px];
                const int64_t v = a + std::llround(st.m[i] * 255.0);
                st.p[i] = static_cast<uint8_t>(std::min<int64_t>(255, std::max<int64_t>(0, v)));
                const double pre = a / 255.0 + st.m[i];
                if (pre < 0.0 || pre > 1.0) st.mask[i] = 0;
            }
    } else {
        for (size_t i = 0; i < st.m.size(); ++i)
            st.p[i] = static_cast<uint8_t>(
                std::min(255L, std::max(0L, std::lround(st.m[i] * 255.0))));
    }
}

// dm: gradient w.r.t. st.m. Fills gin (gradient w.r.t. the real-valued view
// of the stage input) when requested, and accumulates entry grads.
void soft_stage_backward(const PipelinePlan& plan, int si, std::vector<SoftLut>& softs,
                         const SoftStage& st, const std::vector<double>& dm, int h, int w,
                         std::vector<double>* gin) {
    const StagePlan& sp = plan.stages[static_cast<size_t>(si)];
    const int rotations = sp.ensemble ? 4 : 1;
    const size_t plane = static_cast<size_t>(h) * w;
    const double inv = 1.0 / (rotations * sp.contributions);

    for (const Rec& rec : st.recs) {
        SoftLut& t = softs[static_cast<size_t>(rec.unit)];
        const int arity = rec.arity, slots = rec.slots;
        for (int k = 0; k < slots; ++k) {
            const double go =
                dm[(static_cast<size_t>(rec.out_base) + k) * plane +
                   static_cast<size_t>(rec.out_px)] *
                inv;
            if (go == 0.0) continue;
            for (int j = 0; j <= arity; ++j)
                t.g[static_cast<size_t>(rec.vlat[j]) * slots + k] += go * rec.w[j] / 16.0;
            if (gin) {
                for (int j = 1; j <= arity; ++j) {
                    const double slope =
                        (t.e[static_cast<size_t>(rec.vlat[j]) * slots + k] -
                         t.e[static_cast<size_t>(rec.vlat[j - 1]) * slots + k]) /
                        16.0;
                    (*gin)[static_cast<size_t>(rec.src[rec.ord[j - 1]])] +=
                        go * 255.0 * slope;
                }
            }
        }
    }
}

}  // namespace

ImageU8 soft_run(const PipelinePlan& plan, const std::vector<SoftLut>& softs,
                 const ImageU8& img) {
    if (img.channels != plan.cfg.input_channels)
        throw ConfigError("soft_run: channel count does not match the pipeline");
    std::vector<uint8_t> cur(img.data);
    SoftStage st;
    for (size_t si = 0; si < plan.stages.size(); ++si) {
        soft_stage_forward(plan, static_cast<int>(si), softs, cur, img, img.height,
                           img.width, st);
        cur = st.p;
    }
    ImageU8 out(img.width, img.height, plan.stages.back().out_channels);
    out.data = cur;
    return out;
}

namespace {

double heldout_cpsnr(const LutPipeline& lp, const std::vector<ImageU8>& heldout,
                     double sigma, uint64_t seed) {
    double sum = 0.0;
    for (size_t i = 0; i < heldout.size(); ++i) {
        Rng rng(seed * 2654435761ull + i);
        const ImageU8 noisy = add_noise(heldout[i], NoiseSpec{sigma}, rng);
        sum += cpsnr(run_lut(lp, noisy), heldout[i]);
    }
    return sum / static_cast<double>(heldout.size());
}

}  // namespace

FinetuneReport finetune(LutPipeline& lp, const std::vector<ImageU8>& train_images,
                        const std::vector<ImageU8>& heldout_clean, const FinetuneConfig& cfg) {
    if (cfg.iterations < 0) throw ConfigError("finetune: iterations must be >= 0");
    if (train_images.empty()) throw ConfigError("finetune: no training images");
    if (heldout_clean.empty()) throw ConfigError("finetune: no held-out images");
    for (const ImageU8& im : train_images)
        if (im.width < cfg.patch_size || im.height < cfg.patch_size)
            throw ConfigError("finetune: image smaller than patch size");

    const PipelinePlan& plan = lp.plan;
    FinetuneReport rep;
    const std::vector<LutTable> before = lp.tables;
    rep.heldout_cpsnr_before = heldout_cpsnr(lp, heldout_clean, cfg.sigma, cfg.seed);

    std::vector<SoftLut> softs;
    std::vector<AdamState<double>> adam;
    for (const LutTable& t : lp.tables) {
        softs.push_back(SoftLut::from_table(t));
        AdamState<double> st;
        st.init(softs.back().e.size());
        adam.push_back(std::move(st));
    }

    Rng rng(cfg.seed);
    const int P = cfg.patch_size, B = cfg.batch_size;
    const size_t plane = static_cast<size_t>(P) * P;
    std::vector<SoftStage> stages(plan.stages.size());

    for (int it = 1; it <= cfg.iterations; ++it) {
        for (SoftLut& s : softs) std::fill(s.g.begin(), s.g.end(), 0.0);
        double loss_acc = 0.0;

        for (int bi = 0; bi < B; ++bi) {
            // same sampler shape as training: crop, rotate, fresh noise
            const ImageU8& im =
                train_images[rng.bounded(static_cast<uint32_t>(train_images.size()))];
            const int y0 =
                static_cast<int>(rng.bounded(static_cast<uint32_t>(im.height - P + 1)));
            const int x0 =
                static_cast<int>(rng.bounded(static_cast<uint32_t>(im.width - P + 1)));
            const int rot = static_cast<int>(rng.bounded(4));
            ImageU8 clean(P, P, 3);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < P; ++y)
                    for (int x = 0; x < P; ++x)
                        clean.at(c, y, x) = im.at(c, y0 + y, x0 + x);
            clean = rotate_cw(clean, rot);
            ImageU8 noisy(P, P, 3);
            for (size_t i = 0; i < noisy.data.size(); ++i)
                noisy.data[i] = clamp_u8(static_cast<double>(clean.data[i]) +
                                         cfg.sigma * rng.gaussian());

            // forward
            std::vector<uint8_t> cur(noisy.data);
            for (size_t si = 0; si < plan.stages.size(); ++si) {
                soft_stage_forward(plan, static_cast<int>(si), softs, cur, noisy, P, P,
                                   stages[si]);
                cur = stages[si].p;
            }

            // loss on the continuous final view
            const SoftStage& last = stages.back();
            const size_t numel = last.m.size();
            std::vector<double> dm(numel, 0.0);
            const double gscale = 2.0 / (static_cast<double>(numel) * B);
            for (int c = 0; c < 3; ++c)
                for (size_t px = 0; px < plane; ++px) {
                    const size_t i = static_cast<size_t>(c) * plane + px;
                    const double anchor = noisy.data[i] / 255.0;
                    const double pre = anchor + last.m[i];
                    const double v = pre < 0.0 ? 0.0 : (pre > 1.0 ? 1.0 : pre);
                    const double d = v - clean.data[i] / 255.0;
                    loss_acc += d * d / (static_cast<double>(numel) * B);
                    dm[i] = last.mask[i] ? gscale * d : 0.0;
                }

            // backward through stages
            for (size_t si = plan.stages.size(); si-- > 0;) {
                std::vector<double> gin;
                const bool want_gin = si > 0;
                if (want_gin)
                    gin.assign(static_cast<size_t>(plan.stages[si].in_channels) * plane, 0.0);
                soft_stage_backward(plan, static_cast<int>(si), softs, stages[si], dm, P, P,
                                    want_gin ? &gin : nullptr);
                if (want_gin) {
                    // map input grads through the previous stage's output view
                    const StagePlan& prev = plan.stages[si - 1];
                    dm.assign(gin.size(), 0.0);
                    if (prev.semantics == Semantics::residual) {
                        const SoftStage& ps = stages[si - 1];
                        for (size_t i = 0; i < gin.size(); ++i)
                            dm[i] = ps.mask[i] ? gin[i] : 0.0;
                    } else {
                        dm = gin;
                    }
                }
            }
        }

        if (it == 1) rep.loss_first = loss_acc;
        rep.loss_last = loss_acc;
        for (size_t ti = 0; ti < softs.size(); ++ti) {
            adam_step(softs[ti].e.data(), softs[ti].g.data(), softs[ti].e.size(), adam[ti],
                      it, cfg.lr);
            softs[ti].project();
        }
    }

    if (cfg.iterations > 0) {
        std::vector<LutTable> candidate;
        for (const SoftLut& s : softs) candidate.push_back(s.export_table());
        lp.tables = candidate;
        rep.heldout_cpsnr_after = heldout_cpsnr(lp, heldout_clean, cfg.sigma, cfg.seed);
        if (rep.heldout_cpsnr_after < rep.heldout_cpsnr_before) {
            lp.tables = before;
            rep.reverted = true;
            rep.heldout_cpsnr_after = rep.heldout_cpsnr_before;
        }
    } else {
        rep.heldout_cpsnr_after = rep.heldout_cpsnr_before;
    }
    return rep;
}

}  // namespace lutdn
