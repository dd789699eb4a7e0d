#pragma once

#include <cstdint>
#include <vector>

#include "lutdn/image.hpp"
#include "lutdn/lut.hpp"
#include "lutdn/pipeline.hpp"

namespace lutdn {

// Baked table with real-valued entries (in [0,1] pixel units, i.e. entry/255)
// so they can be optimized through the interpolation. Export re-quantizes.
struct SoftLut {
    int dims = 0;
    int out_slots = 1;
    Semantics semantics = Semantics::feature;
    std::string id;
    std::vector<double> e;  // values, entry/255
    std::vector<double> g;  // gradient accumulator

    static SoftLut from_table(const LutTable& t);
    LutTable export_table() const;
    void project();  // clamp entries back into the semantic range
    double range_lo() const { return semantics == Semantics::residual ? -128.0 / 255.0 : 0.0; }
    double range_hi() const { return semantics == Semantics::residual ? 127.0 / 255.0 : 1.0; }
};

// Differentiable lookup, identical weighting to the integer path.
// out[k] = sum_j w_j * e[vertex_j, k] / 16.
void soft_lookup(const SoftLut& t, const uint8_t* p, double* out);
// Accumulates d out/d entry = w_j/16 scaled by dout into t.g.
void soft_lookup_backward(SoftLut& t, const uint8_t* p, const double* dout);

struct FinetuneConfig {
    int iterations = 2000;
    double lr = 1e-4;
    int batch_size = 12;
    int patch_size = 24;
    uint64_t seed = 7;
    double sigma = 25.0;
};

struct FinetuneReport {
    double heldout_cpsnr_before = 0.0;
    double heldout_cpsnr_after = 0.0;
    double loss_first = 0.0;
    double loss_last = 0.0;
    bool reverted = false;
};

// Full soft forward pass over the plan; returns the 8-bit view after the
// last stage. With entries fresh from from_table this equals run_lut exactly,
// which is what makes fine-tuning start from the baked pipeline's behavior.
ImageU8 soft_run(const PipelinePlan& plan, const std::vector<SoftLut>& softs,
                 const ImageU8& img);

// Optimizes every table of lp end-to-end through the full LUT-mode graph
// (rotation ensembles included). Held-out CPSNR is measured with exported
// tables before and after; a regression reverts the tables, so the result
// never evaluates worse than the input pipeline.
FinetuneReport finetune(LutPipeline& lp, const std::vector<ImageU8>& train_images,
                        const std::vector<ImageU8>& heldout_clean, const FinetuneConfig& cfg);

}  // namespace lutdn
