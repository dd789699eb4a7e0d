#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lutdn/image.hpp"
#include "lutdn/lut.hpp"
#include "lutdn/micronet.hpp"

namespace lutdn {

// ---------------------------------------------------------------------------
// Declarative pipeline description.
//
// A pipeline is an ordered list of stages. Each stage evaluates a set of
// blocks on its input image and combines them (concat or average). Feature
// stages emit 8-bit intermediates; residual stages add their combined output
// to the pipeline's original input. Stages flagged `ensemble` run the
// 4-rotation scheme: rotate input r quarter-turns, evaluate, rotate the
// result back (4-r) turns, average all four with one final rounding.

enum class BlockKind : uint8_t { pcm = 0, lshape = 1, fusion = 2 };
enum class Combine : uint8_t { concat = 0, average = 1 };

struct BlockSpec {
    BlockKind kind = BlockKind::lshape;
    std::vector<int> taps;  // fusion only: input channel ids, <= 4
    int slots = 0;          // fusion only: outputs per lattice point
};

struct StageSpec {
    std::string name;
    bool ensemble = false;
    Combine combine = Combine::concat;
    Semantics semantics = Semantics::feature;
    std::vector<BlockSpec> blocks;
};

struct PipelineConfig {
    int input_channels = 3;
    std::vector<StageSpec> stages;
};

PipelineConfig parse_pipeline_config(const std::string& text);
PipelineConfig load_pipeline_config(const std::string& path);
std::string canonical_config_text(const PipelineConfig& cfg);

// Built-in topologies: "base" (two ensembled l-shape stages) and "reference"
// (pcm + l-shape stages with channel-fusion mixing). Returns nullptr when the
// name is unknown so callers can fall back to reading a file.
const char* builtin_config(const std::string& name);

// Wraps a spatial-only (l-shaped blocks only) pipeline with a leading
// rotation-ensembled PCM stage in residual form, so the wrapped pipeline
// starts out exactly equal to the base and can only be trained upward.
PipelineConfig pcm_plugin(const PipelineConfig& base);

// ---------------------------------------------------------------------------
// Planned (validated, flattened) form. One Unit = one trainable MLP = one
// baked table. A unit may be evaluated several times per stage (the l-shaped
// unit runs once per channel with shared weights); each evaluation carries
// its own tap wiring and output channel range.

struct UnitInfo {
    std::string id;
    int arity = 0;  // table dims
    int slots = 1;
    Semantics semantics = Semantics::feature;
    int stage = 0;
};

struct UnitEval {
    int unit = 0;
    std::vector<Tap> taps;  // into the stage input
    int out_base = 0;       // first of `slots` consecutive output channels
};

struct StagePlan {
    bool ensemble = false;
    Combine combine = Combine::concat;
    Semantics semantics = Semantics::feature;
    int in_channels = 0;
    int out_channels = 0;
    int contributions = 1;  // evaluations summed per output channel
    std::vector<UnitEval> evals;
};

struct PipelinePlan {
    PipelineConfig cfg;
    std::vector<UnitInfo> units;
    std::vector<StagePlan> stages;
};

PipelinePlan plan_pipeline(const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// Two runnable forms sharing one plan.

struct FloatPipeline {
    PipelinePlan plan;
    std::vector<Mlp<float>> units;
};

struct LutPipeline {
    PipelinePlan plan;
    std::vector<LutTable> tables;
};

// Per-block cascade: tap head -> 3 one-by-one layers (ReLU, ReLU, identity).
inline constexpr int kHiddenWidth = 16;
inline constexpr int kLayersPerUnit = 4;

FloatPipeline init_float_pipeline(const PipelinePlan& plan, uint64_t seed);

// Weight checkpoint (.dnwt): magic "DNWT", version u16, layer count u32,
// then per layer: kind u8, activation u8, out_channels u16, tap_count u16,
// taps (dy,dx,channel as i16), f32 row-major weights, f32 bias.
void save_weights(const FloatPipeline& fp, const std::string& path);
FloatPipeline load_weights(const PipelinePlan& plan, const std::string& path);

// Fills units [first_unit, end) from a checkpoint of a smaller pipeline;
// used when wrapping a trained base with a fresh plug-in stage.
void load_weights_into(FloatPipeline& fp, const std::string& path, int first_unit);

// Bakes every unit. Float and LUT modes then agree within one level per
// stage at lattice-aligned inputs.
LutPipeline convert(const FloatPipeline& fp, bool parallel = true);

// Manifest directory layout: manifest.txt + pipeline.cfg + one .dnlt per unit.
void save_lut_pipeline(const LutPipeline& lp, const std::string& dir);
LutPipeline load_lut_pipeline(const std::string& manifest_path);

// FNV-1a over the canonical config text and every table's serialized bytes.
uint64_t pipeline_hash(const LutPipeline& lp);

// ---------------------------------------------------------------------------
// Evaluation. pipeline_input is the original image (residual anchor).

// Maps coords of the r-turn-rotated frame back to source coords:
// rotate_cw(img, r).at(c, yr, xr) == img.at(c, y, x).
struct SrcCoord {
    int y, x;
};
SrcCoord inv_rotate(int r, int yr, int xr, int h, int w);

ImageU8 eval_stage_lut(const PipelinePlan& plan, int stage, const std::vector<LutTable>& tables,
                       const ImageU8& input, const ImageU8& pipeline_input, bool parallel);
ImageU8 eval_stage_float(const PipelinePlan& plan, int stage, const std::vector<Mlp<float>>& units,
                         const ImageU8& input, const ImageU8& pipeline_input, bool parallel);

ImageU8 run_lut(const LutPipeline& lp, const ImageU8& img, bool parallel = true);
ImageU8 run_float(const FloatPipeline& fp, const ImageU8& img, bool parallel = true);

// ---------------------------------------------------------------------------
// Structural cost model (per megapixel of input).

struct OpCount {
    int64_t lookups = 0;   // table probes
    int64_t interels = 0;  // weight*entry products
    int64_t muls = 0;
    int64_t adds = 0;
};

OpCount op_count(const PipelinePlan& plan);

}  // namespace lutdn
