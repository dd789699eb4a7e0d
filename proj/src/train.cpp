#include "lutdn/train.hpp"

#include <cmath>

#include "lutdn/errors.hpp"
#include "lutdn/noise.hpp"
#include "lutdn/rng.hpp"

namespace lutdn {

void TrainConfig::validate() const {
    if (iterations <= 0) throw ConfigError("train: iterations must be > 0");
    if (batch_size <= 0) throw ConfigError("train: batch_size must be > 0");
    if (patch_size < 4) throw ConfigError("train: patch_size must be >= 4");
    if (!(lr_min > 0.0) || !(lr_min <= lr_max))
        throw ConfigError("train: need 0 < lr_min <= lr_max");
    if (sigma < 0.0) throw ConfigError("train: sigma must be >= 0");
    if (warmup_direct < 0 || warmup_direct > iterations)
        throw ConfigError("train: warmup_direct outside [0, iterations]");
}

namespace {

struct EvalCache {
    std::vector<LayerCache<float>> layers;
    Mat<float> yraw;  // final layer output before the per-block range clamp
};

struct StageCache {
    Tensor<float> out;      // quantized stage output (next stage's input)
    Tensor<float> pre;      // residual stages: anchor + combined, before clamp01
    std::vector<EvalCache> evals;
};

struct UnitOpt {
    std::vector<AdamState<float>> w_state, b_state;
    std::vector<int64_t> steps;  // per layer; bias correction counts real steps
};

// training forward for one stage (no rotation ensemble; augmentation covers it)
void stage_forward(const PipelinePlan& plan, int stage, std::vector<Mlp<float>>& units,
                   const Tensor<float>& in, const Tensor<float>& anchor, StageCache& sc) {
    const StagePlan& sp = plan.stages[static_cast<size_t>(stage)];
    const int n = in.n, h = in.h, w = in.w;
    Tensor<float> acc(n, sp.out_channels, h, w);
    sc.evals.resize(sp.evals.size());
    const bool residual = sp.semantics == Semantics::residual;
    const float lo = residual ? -128.0f / 255.0f : 0.0f;
    const float hi = residual ? 127.0f / 255.0f : 1.0f;

    for (size_t ei = 0; ei < sp.evals.size(); ++ei) {
        const UnitEval& ev = sp.evals[ei];
        EvalCache& ec = sc.evals[ei];
        Mat<float> x0;
        gather_taps(in, ev.taps, x0);
        Mat<float> y;
        units[static_cast<size_t>(ev.unit)].forward(x0, ec.layers, y);
        ec.yraw = y;
        const int slots = y.rows;
        for (int k = 0; k < slots; ++k) {
            const float* src = y.row(k);
            // matrix columns are (n,h,w)-ordered, matching the tensor planes
            for (int ni = 0; ni < n; ++ni) {
                float* dst = acc.v.data() + acc.idx(ni, ev.out_base + k, 0, 0);
                const float* s = src + static_cast<size_t>(ni) * h * w;
                for (size_t px = 0; px < acc.plane(); ++px)
                    dst[px] += std::min(hi, std::max(lo, s[px]));
            }
        }
    }
    if (sp.contributions > 1) {
        const float inv = 1.0f / static_cast<float>(sp.contributions);
        for (float& v : acc.v) v *= inv;
    }
    sc.out = Tensor<float>(n, sp.out_channels, h, w);
    if (residual) {
        sc.pre = Tensor<float>(n, sp.out_channels, h, w);
        for (size_t i = 0; i < acc.v.size(); ++i) {
            const float pre = anchor.v[i] + acc.v[i];
            sc.pre.v[i] = pre;
            const float c = pre < 0.0f ? 0.0f : (pre > 1.0f ? 1.0f : pre);
            sc.out.v[i] = static_cast<float>(std::lround(c * 255.0f) / 255.0);
        }
    } else {
        for (size_t i = 0; i < acc.v.size(); ++i)
            sc.out.v[i] = static_cast<float>(std::lround(acc.v[i] * 255.0f) / 255.0);
    }
}

// backward for one stage; consumes sc.out.grad, accumulates unit parameter
// grads and (unless first stage) the input tensor's grad
void stage_backward(const PipelinePlan& plan, int stage, std::vector<Mlp<float>>& units,
                    Tensor<float>& in, StageCache& sc, bool want_input_grad,
                    std::vector<std::vector<LayerGrads<float>>>& unit_grads) {
    const StagePlan& sp = plan.stages[static_cast<size_t>(stage)];
    const int n = in.n, h = in.h, w = in.w;
    const int cols = n * h * w;
    const bool residual = sp.semantics == Semantics::residual;
    const float lo = residual ? -128.0f / 255.0f : 0.0f;
    const float hi = residual ? 127.0f / 255.0f : 1.0f;

    // straight-through quantizer; clamp01 passes gradient on the closed
    // interval so exactly-saturated residual outputs still learn
    std::vector<float> g = sc.out.grad;
    if (residual)
        for (size_t i = 0; i < g.size(); ++i)
            if (sc.pre.v[i] < 0.0f || sc.pre.v[i] > 1.0f) g[i] = 0.0f;
    if (sp.contributions > 1) {
        const float inv = 1.0f / static_cast<float>(sp.contributions);
        for (float& v : g) v *= inv;
    }

    if (want_input_grad) in.ensure_grad();
    for (size_t ei = 0; ei < sp.evals.size(); ++ei) {
        const UnitEval& ev = sp.evals[ei];
        EvalCache& ec = sc.evals[ei];
        const int slots = ec.yraw.rows;
        Mat<float> dy(slots, cols);
        for (int k = 0; k < slots; ++k) {
            float* dst = dy.row(k);
            const float* yr = ec.yraw.row(k);
            size_t j = 0;
            for (int ni = 0; ni < n; ++ni) {
                const float* src =
                    g.data() + (static_cast<size_t>(ni) * sp.out_channels +
                                static_cast<size_t>(ev.out_base + k)) * h * w;
                for (size_t px = 0; px < static_cast<size_t>(h) * w; ++px, ++j)
                    dst[j] = (yr[j] < lo || yr[j] > hi) ? 0.0f : src[px];
            }
        }
        std::vector<LayerGrads<float>> grads;
        Mat<float> dx0;
        units[static_cast<size_t>(ev.unit)].backward(ec.layers, dy, grads, dx0);
        auto& acc = unit_grads[static_cast<size_t>(ev.unit)];
        if (acc.empty()) {
            acc = std::move(grads);
        } else {
            for (size_t li = 0; li < acc.size(); ++li) {
                for (size_t i = 0; i < acc[li].dW.v.size(); ++i)
                    acc[li].dW.v[i] += grads[li].dW.v[i];
                for (size_t i = 0; i < acc[li].db.size(); ++i)
                    acc[li].db[i] += grads[li].db[i];
            }
        }
        if (want_input_grad) scatter_tap_grads(dx0, ev.taps, in);
    }
}

}  // namespace

TrainResult train(FloatPipeline& fp, const std::vector<ImageU8>& images,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (images.empty()) throw ConfigError("train: no images");
    for (const ImageU8& im : images)
        if (im.width < cfg.patch_size || im.height < cfg.patch_size)
            throw ConfigError("train: image smaller than patch size");
    const PipelinePlan& plan = fp.plan;
    if (cfg.warmup_direct > 0 && plan.stages[0].out_channels != plan.cfg.input_channels)
        throw ConfigError("train: warmup_direct needs an image-shaped stage 0 output");
    const size_t n_units = fp.units.size();
    const size_t trainable =
        cfg.trainable_prefix < 0 ? n_units
                                 : std::min(n_units, static_cast<size_t>(cfg.trainable_prefix));

    Rng rng(cfg.seed);
    std::vector<UnitOpt> opt(n_units);
    for (size_t ui = 0; ui < n_units; ++ui) {
        opt[ui].w_state.resize(fp.units[ui].layers.size());
        opt[ui].b_state.resize(fp.units[ui].layers.size());
        opt[ui].steps.assign(fp.units[ui].layers.size(), 0);
        for (size_t li = 0; li < fp.units[ui].layers.size(); ++li) {
            opt[ui].w_state[li].init(fp.units[ui].layers[li].W.v.size());
            opt[ui].b_state[li].init(fp.units[ui].layers[li].b.size());
        }
    }

    TrainResult res;
    res.loss_history.reserve(static_cast<size_t>(cfg.iterations));
    std::vector<Mlp<float>> snapshot;
    const int P = cfg.patch_size, B = cfg.batch_size;

    for (int it = 1; it <= cfg.iterations; ++it) {
        if ((it - 1) % cfg.snapshot_every == 0) snapshot = fp.units;

        // ---- batch assembly: rotation-augmented clean patch, fresh noise
        Tensor<float> noisy(B, 3, P, P), clean(B, 3, P, P);
        for (int bi = 0; bi < B; ++bi) {
            const ImageU8& im = images[rng.bounded(static_cast<uint32_t>(images.size()))];
            const int y0 = static_cast<int>(rng.bounded(static_cast<uint32_t>(im.height - P + 1)));
            const int x0 = static_cast<int>(rng.bounded(static_cast<uint32_t>(im.width - P + 1)));
            const int rot = static_cast<int>(rng.bounded(4));
            ImageU8 patch(P, P, 3);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < P; ++y)
                    for (int x = 0; x < P; ++x)
                        patch.at(c, y, x) = im.at(c, y0 + y, x0 + x);
            patch = rotate_cw(patch, rot);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < P; ++y)
                    for (int x = 0; x < P; ++x) {
                        const uint8_t cv = patch.at(c, y, x);
                        const uint8_t nv =
                            clamp_u8(static_cast<double>(cv) + cfg.sigma * rng.gaussian());
                        clean.at(bi, c, y, x) = static_cast<float>(cv / 255.0);
                        noisy.at(bi, c, y, x) = static_cast<float>(nv / 255.0);
                    }
        }

        // ---- forward
        const bool warmup = it <= cfg.warmup_direct;
        const size_t active_stages = warmup ? 1 : plan.stages.size();
        std::vector<StageCache> caches(active_stages);
        const Tensor<float>* cur = &noisy;
        for (size_t si = 0; si < active_stages; ++si) {
            stage_forward(plan, static_cast<int>(si), fp.units, *cur, noisy, caches[si]);
            cur = &caches[si].out;
        }

        // ---- loss
        Tensor<float>& pred = caches[active_stages - 1].out;
        const double loss = mse_loss(pred, clean, true);
        res.loss_history.push_back(loss);
        if (!std::isfinite(loss)) {
            res.diverged = true;
            fp.units = snapshot;
            res.final_loss = res.loss_history.size() > 1
                                 ? res.loss_history[res.loss_history.size() - 2]
                                 : loss;
            return res;
        }

        // ---- backward
        std::vector<std::vector<LayerGrads<float>>> unit_grads(n_units);
        for (size_t si = active_stages; si-- > 0;) {
            Tensor<float>& in_t = si == 0 ? noisy : caches[si - 1].out;
            stage_backward(plan, static_cast<int>(si), fp.units, in_t, caches[si], si != 0,
                           unit_grads);
        }

        // ---- update
        const double lr = cosine_lr(cfg.lr_max, cfg.lr_min, it, cfg.iterations);
        for (size_t ui = 0; ui < trainable; ++ui) {
            if (unit_grads[ui].empty()) continue;  // unit inactive during warmup
            Mlp<float>& m = fp.units[ui];
            for (size_t li = 0; li < m.layers.size(); ++li) {
                LayerGrads<float>& gr = unit_grads[ui][li];
                if (!all_finite(gr.dW.v.data(), gr.dW.v.size()) ||
                    !all_finite(gr.db.data(), gr.db.size())) {
                    ++res.skipped_steps;
                    continue;
                }
                const int64_t t = ++opt[ui].steps[li];
                adam_step(m.layers[li].W.v.data(), gr.dW.v.data(), gr.dW.v.size(),
                          opt[ui].w_state[li], t, lr);
                adam_step(m.layers[li].b.data(), gr.db.data(), gr.db.size(),
                          opt[ui].b_state[li], t, lr);
            }
        }
        res.final_loss = loss;
    }
    return res;
}

}  // namespace lutdn
