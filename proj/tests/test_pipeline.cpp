#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "lutdn/errors.hpp"
#include "lutdn/pipeline.hpp"
#include "lutdn/rng.hpp"

using namespace lutdn;

namespace {

const char* kBaseCfg = R"(input_channels 3
stage s1
  ensemble on
  combine concat
  semantics feature
  block lshape
stage s2
  ensemble on
  combine concat
  semantics residual
  block lshape
)";

const char* kReferenceCfg = R"(input_channels 3
stage f1
  ensemble on
  combine concat
  semantics feature
  block pcm
  block lshape
stage fuse1
  ensemble off
  combine average
  semantics feature
  block fusion taps=0,1,2,3 slots=3
  block fusion taps=4,5,0,1 slots=3
stage f2
  ensemble on
  combine concat
  semantics feature
  block pcm
  block lshape
stage head
  ensemble off
  combine average
  semantics residual
  block fusion taps=0,1,2,3 slots=3
  block fusion taps=4,5,0,1 slots=3
)";

const char* kPcmOnlyCfg = R"(input_channels 3
stage mix
  ensemble off
  combine concat
  semantics residual
  block pcm
)";

ImageU8 random_image(Rng& rng, int w, int h, int c = 3, int byte_cap = 256) {
    ImageU8 img(w, h, c);
    for (uint8_t& v : img.data)
        v = static_cast<uint8_t>(rng.bounded(static_cast<uint32_t>(byte_cap)));
    return img;
}

ImageU8 lattice_aligned_image(Rng& rng, int w, int h, int c) {
    ImageU8 img(w, h, c);
    for (uint8_t& v : img.data) v = static_cast<uint8_t>(16 * rng.bounded(16));
    return img;
}

LutTable zero_table(int dims, int slots, Semantics sem, const std::string& id) {
    LutTable t;
    t.dims = dims;
    t.out_slots = slots;
    t.semantics = sem;
    t.id = id;
    t.entries.assign(t.lattice_count() * static_cast<size_t>(slots), 0);
    return t;
}

// feature table returning its input along one axis (exact up to byte 240)
LutTable axis_table(int dims, const std::string& id, int axis) {
    LutTable t = zero_table(dims, 1, Semantics::feature, id);
    for (size_t lat = 0; lat < t.lattice_count(); ++lat) {
        size_t rest = lat;
        int idx[4] = {0, 0, 0, 0};
        for (int i = dims - 1; i >= 0; --i) {
            idx[i] = static_cast<int>(rest % 17);
            rest /= 17;
        }
        t.entries[lat] = static_cast<int16_t>(std::min(16 * idx[axis], 255));
    }
    return t;
}

}  // namespace

TEST_CASE("planning the reference topology yields 12 units with pcm wiring") {
    const PipelinePlan plan = plan_pipeline(parse_pipeline_config(kReferenceCfg));
    REQUIRE(plan.units.size() == 12);
    REQUIRE(plan.stages.size() == 4);

    CHECK(plan.units[0].id == "f1.b0.rg");
    CHECK(plan.units[1].id == "f1.b0.gb");
    CHECK(plan.units[2].id == "f1.b0.br");
    CHECK(plan.units[3].id == "f1.b1.l");
    CHECK(plan.units[4].id == "fuse1.b0.f");
    CHECK(plan.units[5].id == "fuse1.b1.f");
    CHECK(plan.units[3].arity == 3);
    CHECK(plan.units[0].arity == 4);
    CHECK(plan.units[4].arity == 4);
    CHECK(plan.units[4].slots == 3);

    const StagePlan& f1 = plan.stages[0];
    CHECK(f1.in_channels == 3);
    CHECK(f1.out_channels == 6);
    CHECK(f1.ensemble);
    CHECK(f1.contributions == 1);
    REQUIRE(f1.evals.size() == 6);  // 3 pcm + 3 lshape

    // pcm pair taps: p1=(0,0,c), p2=(0,1,c), p3=(0,0,c'), p4=(0,1,c')
    const std::vector<Tap> rg = {{0, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 1, 1}};
    const std::vector<Tap> gb = {{0, 0, 1}, {0, 1, 1}, {0, 0, 2}, {0, 1, 2}};
    const std::vector<Tap> br = {{0, 0, 2}, {0, 1, 2}, {0, 0, 0}, {0, 1, 0}};
    CHECK(f1.evals[0].taps == rg);
    CHECK(f1.evals[1].taps == gb);
    CHECK(f1.evals[2].taps == br);
    CHECK(f1.evals[0].out_base == 0);
    CHECK(f1.evals[1].out_base == 1);
    CHECK(f1.evals[2].out_base == 2);

    // one shared l-shaped unit, one eval per channel
    CHECK(f1.evals[3].unit == 3);
    CHECK(f1.evals[4].unit == 3);
    CHECK(f1.evals[5].unit == 3);
    const std::vector<Tap> l1 = {{0, 0, 1}, {0, 1, 1}, {1, 1, 1}};
    CHECK(f1.evals[4].taps == l1);
    CHECK(f1.evals[4].out_base == 4);

    const StagePlan& fuse = plan.stages[1];
    CHECK(fuse.in_channels == 6);
    CHECK(fuse.out_channels == 3);
    CHECK(fuse.contributions == 2);
    CHECK_FALSE(fuse.ensemble);
    const std::vector<Tap> ft = {{0, 0, 4}, {0, 0, 5}, {0, 0, 0}, {0, 0, 1}};
    CHECK(fuse.evals[1].taps == ft);

    CHECK(plan.stages[3].semantics == Semantics::residual);
    CHECK(plan.stages[3].out_channels == 3);
}

TEST_CASE("config parser reports line numbers on bad input") {
    auto expect_throw = [](const std::string& text, const char* needle) {
        try {
            plan_pipeline(parse_pipeline_config(text));
            FAIL_CHECK("expected ConfigError for: " << needle);
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_throw("input_channels 3\nstage a\n  frobnicate on\n", "line 3");
    expect_throw("input_channels 3\nstage a\n  ensemble maybe\n", "line 3");
    expect_throw(
        "input_channels 3\nstage a\n  semantics residual\n  block fusion taps=0,1,2,3,0 "
        "slots=3\n",
        "fusion");
    // average of unequal widths
    expect_throw(
        "input_channels 3\nstage a\n  combine average\n  semantics residual\n"
        "  block lshape\n  block fusion taps=0,1,2 slots=2\n",
        "average");
    // last stage must produce an image
    expect_throw("input_channels 3\nstage a\n  semantics feature\n  block lshape\n", "residual");
    // fusion tap outside the stage input
    expect_throw(
        "input_channels 3\nstage a\n  semantics residual\n  block fusion taps=0,1,3 slots=3\n",
        "channel");
    // pcm needs exactly 3 input channels
    expect_throw(
        "input_channels 3\nstage a\n  ensemble on\n  semantics feature\n  block pcm\n"
        "  block lshape\nstage b\n  semantics residual\n  block pcm\n",
        "pcm");
    expect_throw("", "stage");
}

TEST_CASE("canonical text reparses to the same plan") {
    const PipelineConfig cfg = parse_pipeline_config(kReferenceCfg);
    const std::string canon = canonical_config_text(cfg);
    const PipelineConfig cfg2 = parse_pipeline_config(canon);
    CHECK(canonical_config_text(cfg2) == canon);
    const PipelinePlan p1 = plan_pipeline(cfg), p2 = plan_pipeline(cfg2);
    REQUIRE(p1.units.size() == p2.units.size());
    for (size_t i = 0; i < p1.units.size(); ++i) {
        CHECK(p1.units[i].id == p2.units[i].id);
        CHECK(p1.units[i].arity == p2.units[i].arity);
    }
}

TEST_CASE("zero residual tables make the pipeline an exact identity") {
    const PipelinePlan plan = plan_pipeline(parse_pipeline_config(kPcmOnlyCfg));
    LutPipeline lp;
    lp.plan = plan;
    lp.tables.push_back(zero_table(4, 1, Semantics::residual, "mix.b0.rg"));
    lp.tables.push_back(zero_table(4, 1, Semantics::residual, "mix.b0.gb"));
    lp.tables.push_back(zero_table(4, 1, Semantics::residual, "mix.b0.br"));
    Rng rng(1);
    const ImageU8 img = random_image(rng, 9, 7);
    CHECK(run_lut(lp, img).data == img.data);
}

TEST_CASE("pcm evaluation mixes the documented channel pairs") {
    PipelineConfig cfg = parse_pipeline_config(kPcmOnlyCfg);
    cfg.stages[0].semantics = Semantics::feature;  // eval stage 0 directly
    cfg.stages.push_back(cfg.stages[0]);
    cfg.stages[1].name = "tail";
    cfg.stages[1].semantics = Semantics::residual;
    const PipelinePlan plan = plan_pipeline(cfg);

    // rg returns p1 (axis 0), gb returns p3 (axis 2), br returns p2 (axis 1)
    std::vector<LutTable> tables;
    tables.push_back(axis_table(4, "mix.b0.rg", 0));
    tables.push_back(axis_table(4, "mix.b0.gb", 2));
    tables.push_back(axis_table(4, "mix.b0.br", 1));
    tables.push_back(axis_table(4, "tail.b0.rg", 0));
    tables.push_back(axis_table(4, "tail.b0.gb", 0));
    tables.push_back(axis_table(4, "tail.b0.br", 0));
    for (LutTable& t : tables) t.validate();

    Rng rng(2);
    const ImageU8 img = random_image(rng, 8, 6, 3, 241);  // top cell is inexact
    const ImageU8 out = eval_stage_lut(plan, 0, tables, img, img, false);
    const int w = img.width;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < w; ++x) {
            // ch0 = p1 of (r,g) = I(y,x,0)
            CHECK(out.at(0, y, x) == img.at(0, y, x));
            // ch1 = p3 of (g,b) = I(y,x,2)
            CHECK(out.at(1, y, x) == img.at(2, y, x));
            // ch2 = p2 of (b,r) = I(y,min(x+1),2)
            CHECK(out.at(2, y, x) == img.at(2, y, std::min(x + 1, w - 1)));
        }
}

TEST_CASE("rotation-ensembled pipelines are exactly equivariant") {
    const PipelinePlan plan = plan_pipeline(parse_pipeline_config(kBaseCfg));
    const FloatPipeline fp = init_float_pipeline(plan, 99);
    const LutPipeline lp = convert(fp, false);
    Rng rng(3);
    for (int it = 0; it < 5; ++it) {
        const ImageU8 img = random_image(rng, 6, 6);
        const ImageU8 base = run_lut(lp, img, false);
        for (int r = 1; r < 4; ++r) {
            const ImageU8 out = run_lut(lp, rotate_cw(img, r), false);
            CHECK(out.data == rotate_cw(base, r).data);
        }
    }
}

TEST_CASE("float and lut stages agree within one level at lattice points") {
    const PipelinePlan plan = plan_pipeline(parse_pipeline_config(kReferenceCfg));
    const FloatPipeline fp = init_float_pipeline(plan, 7);
    const LutPipeline lp = convert(fp);
    Rng rng(4);
    int max_diff = 0;
    for (int it = 0; it < 30; ++it) {
        const ImageU8 anchor = lattice_aligned_image(rng, 8, 8, 3);
        for (size_t si = 0; si < plan.stages.size(); ++si) {
            const ImageU8 in = lattice_aligned_image(rng, 8, 8, plan.stages[si].in_channels);
            const ImageU8 a = eval_stage_float(plan, static_cast<int>(si), fp.units, in,
                                               anchor, false);
            const ImageU8 b = eval_stage_lut(plan, static_cast<int>(si), lp.tables, in,
                                             anchor, false);
            REQUIRE(a.data.size() == b.data.size());
            for (size_t i = 0; i < a.data.size(); ++i)
                max_diff = std::max(max_diff,
                                    std::abs(static_cast<int>(a.data[i]) -
                                             static_cast<int>(b.data[i])));
        }
    }
    CHECK(max_diff <= 1);
}

TEST_CASE("pcm plug-in wraps a base without touching its tables") {
    const PipelineConfig base_cfg = parse_pipeline_config(kBaseCfg);
    const PipelineConfig wrapped_cfg = pcm_plugin(base_cfg);
    REQUIRE(wrapped_cfg.stages.size() == 3);
    CHECK(wrapped_cfg.stages[0].name == "pcmwrap");
    CHECK(wrapped_cfg.stages[0].semantics == Semantics::residual);
    CHECK(wrapped_cfg.stages[0].ensemble);

    const PipelinePlan base_plan = plan_pipeline(base_cfg);
    const PipelinePlan wrapped_plan = plan_pipeline(wrapped_cfg);
    REQUIRE(wrapped_plan.units.size() == base_plan.units.size() + 3);

    const FloatPipeline base_fp = init_float_pipeline(base_plan, 11);
    const std::string path = "test_base.dnwt";
    save_weights(base_fp, path);
    FloatPipeline wrapped_fp = init_float_pipeline(wrapped_plan, 12);
    load_weights_into(wrapped_fp, path, 3);
    std::remove(path.c_str());

    const LutPipeline base_lp = convert(base_fp, false);
    const LutPipeline wrapped_lp = convert(wrapped_fp, false);
    for (size_t i = 0; i < base_lp.tables.size(); ++i) {
        CHECK(wrapped_lp.tables[i + 3].id == base_lp.tables[i].id);
        CHECK(wrapped_lp.tables[i + 3].entries == base_lp.tables[i].entries);
    }
    // residual-zero init: the fresh pcm stage is an identity, so the wrap
    // starts exactly equal to the base
    for (const LutTable& t : {wrapped_lp.tables[0], wrapped_lp.tables[1], wrapped_lp.tables[2]})
        for (int16_t e : t.entries) CHECK(e == 0);
    Rng rng(5);
    const ImageU8 img = random_image(rng, 10, 9);
    CHECK(run_lut(wrapped_lp, img, false).data == run_lut(base_lp, img, false).data);

    // the plug-in refuses pipelines that already mix channels spatially
    CHECK_THROWS_AS(pcm_plugin(parse_pipeline_config(kReferenceCfg)), ConfigError);
}

TEST_CASE("identical pcm tables commute with a cyclic channel shift") {
    const PipelinePlan plan = plan_pipeline(parse_pipeline_config(kPcmOnlyCfg));
    Rng rng(6);
    LutTable shared = zero_table(4, 1, Semantics::residual, "mix.b0.rg");
    for (int16_t& e : shared.entries) e = static_cast<int16_t>(rng.bounded(256)) - 128;
    LutPipeline lp;
    lp.plan = plan;
    for (const char* id : {"mix.b0.rg", "mix.b0.gb", "mix.b0.br"}) {
        LutTable t = shared;
        t.id = id;
        lp.tables.push_back(std::move(t));
    }
    const ImageU8 img = random_image(rng, 7, 5);
    ImageU8 shifted(img.width, img.height, 3);  // shifted ch c = img ch (c+1)%3
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                shifted.at(c, y, x) = img.at((c + 1) % 3, y, x);
    const ImageU8 a = run_lut(lp, shifted, false);
    const ImageU8 b = run_lut(lp, img, false);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                CHECK(a.at(c, y, x) == b.at((c + 1) % 3, y, x));
}

TEST_CASE("weight checkpoints roundtrip bit-exactly") {
    const PipelinePlan plan = plan_pipeline(parse_pipeline_config(kReferenceCfg));
    const FloatPipeline fp = init_float_pipeline(plan, 13);
    const std::string path = "test_weights.dnwt";
    save_weights(fp, path);
    const FloatPipeline back = load_weights(plan, path);
    REQUIRE(back.units.size() == fp.units.size());
    for (size_t u = 0; u < fp.units.size(); ++u) {
        REQUIRE(back.units[u].layers.size() == fp.units[u].layers.size());
        for (size_t li = 0; li < fp.units[u].layers.size(); ++li) {
            CHECK(back.units[u].layers[li].W.v == fp.units[u].layers[li].W.v);
            CHECK(back.units[u].layers[li].b == fp.units[u].layers[li].b);
        }
    }
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_weights(plan, "missing.dnwt"), IoError);
}

TEST_CASE("manifest directories reload into an identical pipeline") {
    const PipelinePlan plan = plan_pipeline(parse_pipeline_config(kBaseCfg));
    const FloatPipeline fp = init_float_pipeline(plan, 17);
    const LutPipeline lp = convert(fp, false);
    const std::string dir = "test_manifest_dir";
    save_lut_pipeline(lp, dir);
    const LutPipeline back = load_lut_pipeline(dir + "/manifest.txt");
    CHECK(pipeline_hash(back) == pipeline_hash(lp));
    REQUIRE(back.tables.size() == lp.tables.size());
    for (size_t i = 0; i < lp.tables.size(); ++i) {
        CHECK(back.tables[i].entries == lp.tables[i].entries);
        CHECK(back.tables[i].id == lp.tables[i].id);
    }
    Rng rng(8);
    const ImageU8 img = random_image(rng, 12, 5);
    CHECK(run_lut(back, img).data == run_lut(lp, img).data);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_lut_pipeline(dir + "/manifest.txt"), IoError);
}

TEST_CASE("pipeline hash tracks both config and entries") {
    const PipelinePlan plan = plan_pipeline(parse_pipeline_config(kBaseCfg));
    const FloatPipeline fp = init_float_pipeline(plan, 19);
    LutPipeline lp = convert(fp, false);
    const uint64_t h0 = pipeline_hash(lp);
    lp.tables[0].entries[123] = static_cast<int16_t>(lp.tables[0].entries[123] ^ 1);
    CHECK(pipeline_hash(lp) != h0);
}

TEST_CASE("op count: base pipeline per-megapixel tally") {
    // per pixel: two ensembled stages of 3 l-shape evals = 2*4*3 lookups;
    // products 2*4*3*(3+1); adds 96 + 3*(4-1) per stage + 3 residual
    const PipelinePlan plan = plan_pipeline(parse_pipeline_config(kBaseCfg));
    const OpCount oc = op_count(plan);
    CHECK(oc.lookups == 24000000);
    CHECK(oc.muls == 96000000);
    CHECK(oc.adds == 117000000);
    CHECK(oc.interels == oc.muls);
}

TEST_CASE("runs reject images with the wrong channel count") {
    const PipelinePlan plan = plan_pipeline(parse_pipeline_config(kBaseCfg));
    const FloatPipeline fp = init_float_pipeline(plan, 23);
    const LutPipeline lp = convert(fp, false);
    Rng rng(9);
    const ImageU8 gray = random_image(rng, 5, 5, 1);
    CHECK_THROWS_AS(run_lut(lp, gray), ConfigError);
    CHECK_THROWS_AS(run_float(fp, gray), ConfigError);
}
