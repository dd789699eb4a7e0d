#pragma once

#include <cstdint>
#include <vector>

#include "lutdn/image.hpp"
#include "lutdn/pipeline.hpp"

namespace lutdn {

struct TrainConfig {
    int iterations = 20000;
    int batch_size = 12;
    int patch_size = 24;
    double lr_max = 1e-3;
    double lr_min = 1e-5;
    uint64_t seed = 1;
    double sigma = 25.0;
    // first N units trainable, the rest frozen (-1: all trainable);
    // used when a plug-in stage is trained against a frozen base
    int trainable_prefix = -1;
    // iterations at the start where the loss is taken directly at stage 0's
    // output (stage 0 must emit an image); pushes a plug-in stage toward
    // denoising on its own before end-to-end refinement
    int warmup_direct = 0;
    int snapshot_every = 500;  // last-good cadence for divergence aborts

    void validate() const;
};

struct TrainResult {
    double final_loss = 0.0;
    std::vector<double> loss_history;  // one entry per iteration
    bool diverged = false;
    int64_t skipped_steps = 0;  // layer updates skipped on non-finite gradients
};

// Optimizes fp's units in place. Patches are sampled with rotation
// augmentation and fresh per-iteration noise; the whole run is a pure
// function of (fp initial weights, images, cfg).
TrainResult train(FloatPipeline& fp, const std::vector<ImageU8>& images,
                  const TrainConfig& cfg);

}  // namespace lutdn
