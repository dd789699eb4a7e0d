#include "lutdn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "lutdn/errors.hpp"
#include "lutdn/rng.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace lutdn {

// ---------------------------------------------------------------------------
// Config text.

namespace {

// Training and baking cycle multi-megabyte scratch buffers every iteration;
// with default thresholds glibc hands each one back to the kernel and the
// mmap/trim churn costs more than the arithmetic. Keep them on the heap.
[[maybe_unused]] const bool kAllocTuned = [] {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
    return true;
}();

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

[[noreturn]] void cfg_fail(int line_no, const std::string& msg) {
    throw ConfigError("pipeline config line " + std::to_string(line_no) + ": " + msg);
}

std::vector<int> parse_int_list(const std::string& s, int line_no) {
    std::vector<int> out;
    std::string cur;
    for (char ch : s + ",") {
        if (ch == ',') {
            if (cur.empty()) cfg_fail(line_no, "empty entry in list '" + s + "'");
            try {
                out.push_back(std::stoi(cur));
            } catch (...) {
                cfg_fail(line_no, "bad integer '" + cur + "'");
            }
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    return out;
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    StageSpec* stage = nullptr;
    while (std::getline(is, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const std::vector<std::string> tok = split_ws(line);
        if (tok.empty()) continue;
        const std::string& key = tok[0];
        if (key == "input_channels") {
            if (tok.size() != 2) cfg_fail(line_no, "input_channels wants one value");
            cfg.input_channels = std::stoi(tok[1]);
        } else if (key == "stage") {
            if (tok.size() != 2) cfg_fail(line_no, "stage wants a name");
            cfg.stages.push_back(StageSpec{});
            stage = &cfg.stages.back();
            stage->name = tok[1];
        } else if (key == "ensemble" || key == "combine" || key == "semantics" ||
                   key == "block") {
            if (!stage) cfg_fail(line_no, "'" + key + "' before any stage");
            if (key == "ensemble") {
                if (tok.size() != 2 || (tok[1] != "on" && tok[1] != "off"))
                    cfg_fail(line_no, "ensemble wants on|off");
                stage->ensemble = tok[1] == "on";
            } else if (key == "combine") {
                if (tok.size() != 2) cfg_fail(line_no, "combine wants concat|average");
                if (tok[1] == "concat")
                    stage->combine = Combine::concat;
                else if (tok[1] == "average")
                    stage->combine = Combine::average;
                else
                    cfg_fail(line_no, "combine wants concat|average, got '" + tok[1] + "'");
            } else if (key == "semantics") {
                if (tok.size() != 2) cfg_fail(line_no, "semantics wants feature|residual");
                if (tok[1] == "feature")
                    stage->semantics = Semantics::feature;
                else if (tok[1] == "residual")
                    stage->semantics = Semantics::residual;
                else
                    cfg_fail(line_no, "stage semantics must be feature|residual");
            } else {
                if (tok.size() < 2) cfg_fail(line_no, "block wants a kind");
                BlockSpec b;
                if (tok[1] == "pcm") {
                    b.kind = BlockKind::pcm;
                } else if (tok[1] == "lshape") {
                    b.kind = BlockKind::lshape;
                } else if (tok[1] == "fusion") {
                    b.kind = BlockKind::fusion;
                    for (size_t i = 2; i < tok.size(); ++i) {
                        if (tok[i].rfind("taps=", 0) == 0)
                            b.taps = parse_int_list(tok[i].substr(5), line_no);
                        else if (tok[i].rfind("slots=", 0) == 0)
                            b.slots = std::stoi(tok[i].substr(6));
                        else
                            cfg_fail(line_no, "unknown fusion option '" + tok[i] + "'");
                    }
                    if (b.taps.empty()) cfg_fail(line_no, "fusion block needs taps=");
                    if (b.slots < 1) cfg_fail(line_no, "fusion block needs slots>=1");
                } else {
                    cfg_fail(line_no, "unknown block kind '" + tok[1] + "'");
                }
                stage->blocks.push_back(std::move(b));
            }
        } else {
            cfg_fail(line_no, "unknown directive '" + key + "'");
        }
    }
    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_pipeline_config(ss.str());
}

std::string canonical_config_text(const PipelineConfig& cfg) {
    std::ostringstream out;
    out << "input_channels " << cfg.input_channels << "\n";
    for (const StageSpec& s : cfg.stages) {
        out << "\nstage " << s.name << "\n";
        out << "ensemble " << (s.ensemble ? "on" : "off") << "\n";
        out << "combine " << (s.combine == Combine::concat ? "concat" : "average") << "\n";
        out << "semantics " << semantics_name(s.semantics) << "\n";
        for (const BlockSpec& b : s.blocks) {
            switch (b.kind) {
                case BlockKind::pcm: out << "block pcm\n"; break;
                case BlockKind::lshape: out << "block lshape\n"; break;
                case BlockKind::fusion: {
                    out << "block fusion taps=";
                    for (size_t i = 0; i < b.taps.size(); ++i)
                        out << (i ? "," : "") << b.taps[i];
                    out << " slots=" << b.slots << "\n";
                    break;
                }
            }
        }
    }
    return out.str();
}

const char* builtin_config(const std::string& name) {
    if (name == "base")
        return R"(input_channels 3
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
    if (name == "reference")
        return R"(input_channels 3
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
    return nullptr;
}

PipelineConfig pcm_plugin(const PipelineConfig& base) {
    for (const StageSpec& s : base.stages)
        for (const BlockSpec& b : s.blocks)
            if (b.kind != BlockKind::lshape)
                throw ConfigError("pcm_plugin: base pipeline must be spatial-only "
                                  "(l-shaped blocks), stage '" + s.name + "' is not");
    PipelineConfig wrapped = base;
    StageSpec pcm;
    pcm.name = "pcmwrap";
    pcm.ensemble = true;
    pcm.combine = Combine::concat;
    pcm.semantics = Semantics::residual;
    pcm.blocks.push_back(BlockSpec{BlockKind::pcm, {}, 0});
    wrapped.stages.insert(wrapped.stages.begin(), pcm);
    return wrapped;
}

// ---------------------------------------------------------------------------
// Planning / validation.

PipelinePlan plan_pipeline(const PipelineConfig& cfg) {
    if (cfg.input_channels != 3)
        throw ConfigError("pipeline: input_channels must be 3");
    if (cfg.stages.empty()) throw ConfigError("pipeline: no stages");
    PipelinePlan plan;
    plan.cfg = cfg;
    int in_ch = cfg.input_channels;
    for (size_t si = 0; si < cfg.stages.size(); ++si) {
        const StageSpec& s = cfg.stages[si];
        if (s.blocks.empty())
            throw ConfigError("stage " + s.name + ": no blocks");
        StagePlan sp;
        sp.ensemble = s.ensemble;
        sp.combine = s.combine;
        sp.semantics = s.semantics;
        sp.in_channels = in_ch;

        // per-block output widths
        std::vector<int> widths;
        for (size_t bi = 0; bi < s.blocks.size(); ++bi) {
            const BlockSpec& b = s.blocks[bi];
            switch (b.kind) {
                case BlockKind::pcm:
                    if (in_ch != 3)
                        throw ConfigError("stage " + s.name + ": pcm block needs 3 input "
                                          "channels, stage has " + std::to_string(in_ch));
                    widths.push_back(3);
                    break;
                case BlockKind::lshape:
                    widths.push_back(in_ch);
                    break;
                case BlockKind::fusion:
                    if (b.taps.size() > 4)
                        throw ConfigError("stage " + s.name + ": fusion block index "
                                          "dimensionality " + std::to_string(b.taps.size()) +
                                          " exceeds 4, not bakeable");
                    if (b.slots > 8)
                        throw ConfigError("stage " + s.name + ": fusion slots capped at 8");
                    for (int t : b.taps)
                        if (t < 0 || t >= in_ch)
                            throw ConfigError("stage " + s.name + ": fusion tap channel " +
                                              std::to_string(t) + " outside input range");
                    widths.push_back(b.slots);
                    break;
            }
        }
        if (s.combine == Combine::concat) {
            sp.out_channels = 0;
            for (int w : widths) sp.out_channels += w;
            sp.contributions = 1;
        } else {
            for (int w : widths)
                if (w != widths[0])
                    throw ConfigError("stage " + s.name + ": average combine requires equal "
                                      "block widths");
            sp.out_channels = widths[0];
            sp.contributions = static_cast<int>(s.blocks.size());
        }
        if (s.semantics == Semantics::residual && sp.out_channels != cfg.input_channels)
            throw ConfigError("stage " + s.name + ": residual stage must emit " +
                              std::to_string(cfg.input_channels) + " channels");

        // units + evals
        int base = 0;
        for (size_t bi = 0; bi < s.blocks.size(); ++bi) {
            const BlockSpec& b = s.blocks[bi];
            const int block_base = s.combine == Combine::concat ? base : 0;
            const std::string prefix = s.name + ".b" + std::to_string(bi);
            switch (b.kind) {
                case BlockKind::pcm: {
                    static const char* pair_name[3] = {".rg", ".gb", ".br"};
                    for (int p = 0; p < 3; ++p) {
                        const int c = p, cn = (p + 1) % 3;
                        UnitInfo u{prefix + pair_name[p], 4, 1, s.semantics,
                                   static_cast<int>(si)};
                        plan.units.push_back(u);
                        UnitEval e;
                        e.unit = static_cast<int>(plan.units.size()) - 1;
                        e.taps = {Tap{0, 0, c}, Tap{0, 1, c}, Tap{0, 0, cn}, Tap{0, 1, cn}};
                        e.out_base = block_base + p;
                        sp.evals.push_back(std::move(e));
                    }
                    break;
                }
                case BlockKind::lshape: {
                    UnitInfo u{prefix + ".l", 3, 1, s.semantics, static_cast<int>(si)};
                    plan.units.push_back(u);
                    const int unit = static_cast<int>(plan.units.size()) - 1;
                    for (int c = 0; c < in_ch; ++c) {
                        UnitEval e;
                        e.unit = unit;
                        e.taps = {Tap{0, 0, c}, Tap{0, 1, c}, Tap{1, 1, c}};
                        e.out_base = block_base + c;
                        sp.evals.push_back(std::move(e));
                    }
                    break;
                }
                case BlockKind::fusion: {
                    UnitInfo u{prefix + ".f", static_cast<int>(b.taps.size()), b.slots,
                               s.semantics, static_cast<int>(si)};
                    plan.units.push_back(u);
                    UnitEval e;
                    e.unit = static_cast<int>(plan.units.size()) - 1;
                    for (int t : b.taps) e.taps.push_back(Tap{0, 0, t});
                    e.out_base = block_base;
                    sp.evals.push_back(std::move(e));
                    break;
                }
            }
            base += widths[bi];
        }
        plan.stages.push_back(std::move(sp));
        in_ch = plan.stages.back().out_channels;
    }
    if (plan.stages.back().semantics != Semantics::residual)
        throw ConfigError("pipeline: final stage must have residual semantics");
    return plan;
}

// ---------------------------------------------------------------------------
// Float pipeline construction.

namespace {

LayerSpec unit_head_spec(const UnitInfo& u, const UnitEval& sample_eval) {
    LayerSpec ls;
    ls.act = Activation::relu;
    ls.out_channels = kHiddenWidth;
    // canonical taps for checkpoint metadata; actual wiring lives in the plan
    if (u.arity == 4 && sample_eval.taps.size() == 4 && sample_eval.taps[0].dx == 0 &&
        sample_eval.taps[1].dx == 1 && sample_eval.taps[1].dy == 0 &&
        sample_eval.taps[2].dx == 0 && sample_eval.taps[0].channel != sample_eval.taps[2].channel) {
        ls.kind = LayerKind::pcm_head;
        ls.taps = sample_eval.taps;
    } else if (u.arity == 3 && sample_eval.taps.size() == 3 && sample_eval.taps[2].dy == 1) {
        ls.kind = LayerKind::l_shaped;
        ls.taps = {Tap{0, 0, 0}, Tap{0, 1, 0}, Tap{1, 1, 0}};
    } else {
        ls.kind = LayerKind::fusion_group;
        ls.taps = sample_eval.taps;
    }
    return ls;
}

LayerSpec one_by_one_spec(int in, int out, Activation act) {
    LayerSpec ls;
    ls.kind = LayerKind::one_by_one;
    ls.act = act;
    ls.out_channels = out;
    for (int c = 0; c < in; ++c) ls.taps.push_back(Tap{0, 0, c});
    return ls;
}

const UnitEval& first_eval_of(const PipelinePlan& plan, int unit) {
    for (const StagePlan& sp : plan.stages)
        for (const UnitEval& e : sp.evals)
            if (e.unit == unit) return e;
    throw ConfigError("unit without evaluation");
}

Mlp<float> build_unit_mlp(const PipelinePlan& plan, int ui) {
    const UnitInfo& u = plan.units[static_cast<size_t>(ui)];
    Mlp<float> m;
    m.layers.emplace_back(unit_head_spec(u, first_eval_of(plan, ui)));
    m.layers.emplace_back(one_by_one_spec(kHiddenWidth, kHiddenWidth, Activation::relu));
    m.layers.emplace_back(one_by_one_spec(kHiddenWidth, kHiddenWidth, Activation::relu));
    m.layers.emplace_back(one_by_one_spec(kHiddenWidth, u.slots, Activation::identity));
    return m;
}

}  // namespace

FloatPipeline init_float_pipeline(const PipelinePlan& plan, uint64_t seed) {
    FloatPipeline fp;
    fp.plan = plan;
    Rng rng(seed);
    for (size_t ui = 0; ui < plan.units.size(); ++ui) {
        Mlp<float> m = build_unit_mlp(plan, static_cast<int>(ui));
        const bool residual = plan.units[ui].semantics == Semantics::residual;
        // residual units start at exactly zero output: the stage is then an
        // identity map and training can only move it off the input
        init_mlp(m, rng, residual ? 0.0 : 0.1, residual ? 0.0 : 0.5);
        fp.units.push_back(std::move(m));
    }
    return fp;
}

// ---------------------------------------------------------------------------
// Weight checkpoints.

namespace {

void put_u16v(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v & 0xff));
    b.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32v(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
void put_i16v(std::vector<uint8_t>& b, int16_t v) { put_u16v(b, static_cast<uint16_t>(v)); }
void put_f32v(std::vector<uint8_t>& b, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32v(b, bits);
}

struct ByteReader {
    const std::vector<uint8_t>& b;
    size_t pos = 0;
    uint8_t u8(const char* what) {
        if (pos >= b.size()) throw IoError(std::string("dnwt: truncated at ") + what);
        return b[pos++];
    }
    uint16_t u16(const char* what) {
        const uint16_t lo = u8(what), hi = u8(what);
        return static_cast<uint16_t>(lo | (hi << 8));
    }
    uint32_t u32(const char* what) {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8(what)) << (8 * i);
        return v;
    }
    int16_t i16(const char* what) { return static_cast<int16_t>(u16(what)); }
    float f32(const char* what) {
        const uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<uint8_t> b((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
    return b;
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& b) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot create " + path);
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!f) throw IoError("short write to " + path);
}

std::vector<Mlp<float>> parse_weight_layers(const std::vector<uint8_t>& bytes) {
    ByteReader r{bytes};
    char magic[4];
    for (char& m : magic) m = static_cast<char>(r.u8("magic"));
    if (std::memcmp(magic, "DNWT", 4) != 0) throw IoError("dnwt: bad magic");
    const uint16_t version = r.u16("version");
    if (version != 1) throw IoError("dnwt: unsupported version " + std::to_string(version));
    const uint32_t layer_count = r.u32("layer count");
    if (layer_count % kLayersPerUnit != 0)
        throw IoError("dnwt: layer count not a multiple of " + std::to_string(kLayersPerUnit));
    std::vector<Mlp<float>> units;
    Mlp<float> cur;
    for (uint32_t li = 0; li < layer_count; ++li) {
        LayerSpec ls;
        const uint8_t kind = r.u8("layer kind");
        if (kind > 3) throw IoError("dnwt: bad layer kind tag");
        ls.kind = static_cast<LayerKind>(kind);
        const uint8_t act = r.u8("activation");
        if (act > 2) throw IoError("dnwt: bad activation tag");
        ls.act = static_cast<Activation>(act);
        ls.out_channels = r.u16("out_channels");
        const uint16_t taps = r.u16("tap count");
        for (uint16_t t = 0; t < taps; ++t) {
            Tap tap;
            tap.dy = r.i16("tap dy");
            tap.dx = r.i16("tap dx");
            tap.channel = r.i16("tap channel");
            ls.taps.push_back(tap);
        }
        Layer<float> layer(ls);
        for (auto& w : layer.W.v) w = r.f32("weights");
        for (auto& b : layer.b) b = r.f32("bias");
        cur.layers.push_back(std::move(layer));
        if (cur.layers.size() == kLayersPerUnit) {
            units.push_back(std::move(cur));
            cur = Mlp<float>();
        }
    }
    if (r.pos != bytes.size()) throw IoError("dnwt: trailing bytes after last layer");
    return units;
}

void check_unit_shape(const UnitInfo& info, const Mlp<float>& m) {
    if (m.layers.size() != kLayersPerUnit)
        throw ConfigError("checkpoint unit " + info.id + ": wrong layer count");
    if (m.in_arity() != info.arity)
        throw ConfigError("checkpoint unit " + info.id + ": arity " +
                          std::to_string(m.in_arity()) + ", plan wants " +
                          std::to_string(info.arity));
    if (m.out_count() != info.slots)
        throw ConfigError("checkpoint unit " + info.id + ": slots " +
                          std::to_string(m.out_count()) + ", plan wants " +
                          std::to_string(info.slots));
}

}  // namespace

void save_weights(const FloatPipeline& fp, const std::string& path) {
    std::vector<uint8_t> b;
    b.insert(b.end(), {'D', 'N', 'W', 'T'});
    put_u16v(b, 1);
    uint32_t layer_count = 0;
    for (const auto& u : fp.units) layer_count += static_cast<uint32_t>(u.layers.size());
    put_u32v(b, layer_count);
    for (const auto& u : fp.units)
        for (const Layer<float>& L : u.layers) {
            b.push_back(static_cast<uint8_t>(L.spec.kind));
            b.push_back(static_cast<uint8_t>(L.spec.act));
            put_u16v(b, static_cast<uint16_t>(L.spec.out_channels));
            put_u16v(b, static_cast<uint16_t>(L.spec.taps.size()));
            for (const Tap& t : L.spec.taps) {
                put_i16v(b, static_cast<int16_t>(t.dy));
                put_i16v(b, static_cast<int16_t>(t.dx));
                put_i16v(b, static_cast<int16_t>(t.channel));
            }
            for (float w : L.W.v) put_f32v(b, w);
            for (float bias : L.b) put_f32v(b, bias);
        }
    write_file_bytes(path, b);
}

FloatPipeline load_weights(const PipelinePlan& plan, const std::string& path) {
    std::vector<Mlp<float>> units = parse_weight_layers(read_file_bytes(path));
    if (units.size() != plan.units.size())
        throw ConfigError("checkpoint " + path + " has " + std::to_string(units.size()) +
                          " units, plan wants " + std::to_string(plan.units.size()));
    FloatPipeline fp;
    fp.plan = plan;
    for (size_t i = 0; i < units.size(); ++i) {
        check_unit_shape(plan.units[i], units[i]);
        fp.units.push_back(std::move(units[i]));
    }
    return fp;
}

void load_weights_into(FloatPipeline& fp, const std::string& path, int first_unit) {
    std::vector<Mlp<float>> units = parse_weight_layers(read_file_bytes(path));
    const size_t want = fp.plan.units.size() - static_cast<size_t>(first_unit);
    if (units.size() != want)
        throw ConfigError("checkpoint " + path + " has " + std::to_string(units.size()) +
                          " units, tail of plan wants " + std::to_string(want));
    for (size_t i = 0; i < units.size(); ++i) {
        const size_t slot = static_cast<size_t>(first_unit) + i;
        check_unit_shape(fp.plan.units[slot], units[i]);
        fp.units[slot] = std::move(units[i]);
    }
}

// ---------------------------------------------------------------------------
// Conversion + manifest.

LutPipeline convert(const FloatPipeline& fp, bool parallel) {
    LutPipeline lp;
    lp.plan = fp.plan;
    for (size_t ui = 0; ui < fp.units.size(); ++ui) {
        const UnitInfo& info = fp.plan.units[ui];
        lp.tables.push_back(parallel
                                ? bake(fp.units[ui], info.arity, info.slots, info.semantics,
                                       info.id)
                                : bake_serial(fp.units[ui], info.arity, info.slots,
                                              info.semantics, info.id));
    }
    return lp;
}

namespace {

std::string table_filename(const std::string& id) {
    std::string f = id;
    for (char& c : f)
        if (c == '.') c = '_';
    return f + ".dnlt";
}

}  // namespace

void save_lut_pipeline(const LutPipeline& lp, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path base(dir);
    {
        std::ofstream f(base / "pipeline.cfg");
        if (!f) throw IoError("cannot create " + (base / "pipeline.cfg").string());
        f << canonical_config_text(lp.plan.cfg);
    }
    std::ostringstream man;
    man << "format dnlut-manifest\nversion 1\nconfig pipeline.cfg\n";
    for (size_t ui = 0; ui < lp.tables.size(); ++ui) {
        const LutTable& t = lp.tables[ui];
        const std::string fname = table_filename(t.id);
        save_table((base / fname).string(), t);
        man << "table " << t.id << " " << fname << " " << semantics_name(t.semantics) << " "
            << t.dims << " " << t.out_slots << "\n";
    }
    std::ofstream f(base / "manifest.txt");
    if (!f) throw IoError("cannot create " + (base / "manifest.txt").string());
    f << man.str();
}

LutPipeline load_lut_pipeline(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw IoError("cannot open " + manifest_path);
    const std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
    std::string line, config_rel;
    struct Entry {
        std::string file, sem;
        int dims, slots;
    };
    std::map<std::string, Entry> entries;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(f, line)) {
        ++line_no;
        const std::vector<std::string> tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "format") {
            if (tok.size() != 2 || tok[1] != "dnlut-manifest")
                throw IoError("manifest: bad format line " + std::to_string(line_no));
            header_seen = true;
        } else if (tok[0] == "version") {
            if (tok.size() != 2 || tok[1] != "1")
                throw IoError("manifest: unsupported version at line " +
                              std::to_string(line_no));
        } else if (tok[0] == "config") {
            if (tok.size() != 2)
                throw IoError("manifest: bad config line " + std::to_string(line_no));
            config_rel = tok[1];
        } else if (tok[0] == "table") {
            if (tok.size() != 6)
                throw IoError("manifest: table line " + std::to_string(line_no) +
                              " wants: table <id> <file> <semantics> <dims> <slots>");
            entries[tok[1]] = Entry{tok[2], tok[3], std::stoi(tok[4]), std::stoi(tok[5])};
        } else {
            throw IoError("manifest: unknown directive '" + tok[0] + "' at line " +
                          std::to_string(line_no));
        }
    }
    if (!header_seen) throw IoError("manifest: missing 'format dnlut-manifest' header");
    if (config_rel.empty()) throw IoError("manifest: missing config line");

    LutPipeline lp;
    lp.plan = plan_pipeline(load_pipeline_config((dir / config_rel).string()));
    for (const UnitInfo& info : lp.plan.units) {
        const auto it = entries.find(info.id);
        if (it == entries.end())
            throw ConfigError("manifest: missing table id " + info.id);
        LutTable t = load_table((dir / it->second.file).string());
        if (t.id != info.id || t.dims != info.arity || t.out_slots != info.slots ||
            t.semantics != info.semantics)
            throw ConfigError("manifest: table " + info.id +
                              " does not match the pipeline plan");
        lp.tables.push_back(std::move(t));
    }
    return lp;
}

uint64_t pipeline_hash(const LutPipeline& lp) {
    uint64_t h = 1469598103934665603ull;  // FNV-1a 64
    auto mix = [&h](const uint8_t* p, size_t n) {
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    const std::string cfg = canonical_config_text(lp.plan.cfg);
    mix(reinterpret_cast<const uint8_t*>(cfg.data()), cfg.size());
    for (const LutTable& t : lp.tables) {
        const std::vector<uint8_t> b = serialize(t);
        mix(b.data(), b.size());
    }
    return h;
}

// ---------------------------------------------------------------------------
// Evaluation.

SrcCoord inv_rotate(int r, int yr, int xr, int h, int w) {
    switch (((r % 4) + 4) % 4) {
        case 1: return {h - 1 - xr, yr};
        case 2: return {h - 1 - yr, w - 1 - xr};
        case 3: return {xr, w - 1 - yr};
        default: return {yr, xr};
    }
}

ImageU8 eval_stage_lut(const PipelinePlan& plan, int stage, const std::vector<LutTable>& tables,
                       const ImageU8& input, const ImageU8& pipeline_input, bool parallel) {
    const StagePlan& sp = plan.stages[static_cast<size_t>(stage)];
    if (input.channels != sp.in_channels)
        throw ConfigError("stage input has " + std::to_string(input.channels) +
                          " channels, plan wants " + std::to_string(sp.in_channels));
    const int h = input.height, w = input.width;
    const int rotations = sp.ensemble ? 4 : 1;
    std::vector<int32_t> accum(static_cast<size_t>(sp.out_channels) * h * w, 0);

    for (int r = 0; r < rotations; ++r) {
        const ImageU8 rot = rotate_cw(input, r);
        const int rh = rot.height, rw = rot.width;
        for (const UnitEval& ev : sp.evals) {
            const LutTable& t = tables[static_cast<size_t>(ev.unit)];
            const int arity = t.dims, slots = t.out_slots;
            const Tap* taps = ev.taps.data();
#pragma omp parallel for schedule(static) if (parallel)
            for (int yr = 0; yr < rh; ++yr) {
                uint8_t p[4];
                int64_t raw[8];
                for (int xr = 0; xr < rw; ++xr) {
                    for (int i = 0; i < arity; ++i) {
                        const int yy = std::min(yr + taps[i].dy, rh - 1);
                        const int xx = std::min(xr + taps[i].dx, rw - 1);
                        p[i] = rot.at(taps[i].channel, yy, xx);
                    }
                    lookup_raw(t, p, raw);
                    const SrcCoord o = inv_rotate(r, yr, xr, h, w);
                    const size_t px = static_cast<size_t>(o.y) * w + o.x;
                    for (int k = 0; k < slots; ++k)
                        accum[(static_cast<size_t>(ev.out_base) + k) * h * w + px] +=
                            static_cast<int32_t>(raw[k]);
                }
            }
        }
    }

    ImageU8 out(w, h, sp.out_channels);
    const int64_t den = static_cast<int64_t>(kInterval) * rotations * sp.contributions;
    const bool residual = sp.semantics == Semantics::residual;
#pragma omp parallel for schedule(static) if (parallel)
    for (int c = 0; c < sp.out_channels; ++c) {
        const int32_t* a = accum.data() + static_cast<size_t>(c) * h * w;
        uint8_t* dst = out.data.data() + out.plane() * c;
        const uint8_t* anchor =
            residual ? pipeline_input.data.data() + pipeline_input.plane() * c : nullptr;
        for (size_t px = 0; px < out.plane(); ++px) {
            int64_t v = div_round_half_away(a[px], den);
            if (residual) v += anchor[px];
            dst[px] = static_cast<uint8_t>(std::min<int64_t>(255, std::max<int64_t>(0, v)));
        }
    }
    return out;
}

ImageU8 eval_stage_float(const PipelinePlan& plan, int stage, const std::vector<Mlp<float>>& units,
                         const ImageU8& input, const ImageU8& pipeline_input, bool parallel) {
    const StagePlan& sp = plan.stages[static_cast<size_t>(stage)];
    if (input.channels != sp.in_channels)
        throw ConfigError("stage input has " + std::to_string(input.channels) +
                          " channels, plan wants " + std::to_string(sp.in_channels));
    const int h = input.height, w = input.width;
    const int rotations = sp.ensemble ? 4 : 1;
    std::vector<double> accum(static_cast<size_t>(sp.out_channels) * h * w, 0.0);

    Mat<float> probe, y;
    for (int r = 0; r < rotations; ++r) {
        const ImageU8 rot = rotate_cw(input, r);
        const int rh = rot.height, rw = rot.width;
        const int n = rh * rw;
        for (const UnitEval& ev : sp.evals) {
            const Mlp<float>& m = units[static_cast<size_t>(ev.unit)];
            const int arity = m.in_arity(), slots = m.out_count();
            probe = Mat<float>(arity, n);
            for (int i = 0; i < arity; ++i) {
                const Tap tap = ev.taps[static_cast<size_t>(i)];
                float* dst = probe.row(i);
                for (int yr = 0; yr < rh; ++yr) {
                    const int yy = std::min(yr + tap.dy, rh - 1);
                    for (int xr = 0; xr < rw; ++xr)
                        dst[yr * rw + xr] =
                            static_cast<float>(rot.at(tap.channel, yy,
                                                      std::min(xr + tap.dx, rw - 1)) /
                                               255.0);
                }
            }
            if (parallel)
                m.infer(probe, y);
            else
                m.infer_serial(probe, y);
            const bool residual = sp.semantics == Semantics::residual;
            const double lo = residual ? -128.0 / 255.0 : 0.0;
            const double hi = residual ? 127.0 / 255.0 : 1.0;
            for (int k = 0; k < slots; ++k) {
                const float* src = y.row(k);
                double* dst = accum.data() + (static_cast<size_t>(ev.out_base) + k) * h * w;
                for (int yr = 0; yr < rh; ++yr)
                    for (int xr = 0; xr < rw; ++xr) {
                        const double v =
                            std::min(hi, std::max(lo, static_cast<double>(src[yr * rw + xr])));
                        const SrcCoord o = inv_rotate(r, yr, xr, h, w);
                        dst[static_cast<size_t>(o.y) * w + o.x] += v;
                    }
            }
        }
    }

    ImageU8 out(w, h, sp.out_channels);
    const double den = static_cast<double>(rotations) * sp.contributions;
    const bool residual = sp.semantics == Semantics::residual;
    for (int c = 0; c < sp.out_channels; ++c) {
        const double* a = accum.data() + static_cast<size_t>(c) * h * w;
        uint8_t* dst = out.data.data() + out.plane() * c;
        const uint8_t* anchor =
            residual ? pipeline_input.data.data() + pipeline_input.plane() * c : nullptr;
        for (size_t px = 0; px < out.plane(); ++px) {
            double v = 255.0 * (a[px] / den);
            if (residual) v += anchor[px];
            const long q = std::lround(v);
            dst[px] = static_cast<uint8_t>(std::min(255L, std::max(0L, q)));
        }
    }
    return out;
}

ImageU8 run_lut(const LutPipeline& lp, const ImageU8& img, bool parallel) {
    if (img.channels != lp.plan.cfg.input_channels)
        throw ConfigError("input image must have " +
                          std::to_string(lp.plan.cfg.input_channels) + " channels");
    ImageU8 cur = img;
    for (size_t si = 0; si < lp.plan.stages.size(); ++si)
        cur = eval_stage_lut(lp.plan, static_cast<int>(si), lp.tables, cur, img, parallel);
    return cur;
}

ImageU8 run_float(const FloatPipeline& fp, const ImageU8& img, bool parallel) {
    if (img.channels != fp.plan.cfg.input_channels)
        throw ConfigError("input image must have " +
                          std::to_string(fp.plan.cfg.input_channels) + " channels");
    ImageU8 cur = img;
    for (size_t si = 0; si < fp.plan.stages.size(); ++si)
        cur = eval_stage_float(fp.plan, static_cast<int>(si), fp.units, cur, img, parallel);
    return cur;
}

OpCount op_count(const PipelinePlan& plan) {
    OpCount oc;
    for (const StagePlan& sp : plan.stages) {
        const int64_t rot = sp.ensemble ? 4 : 1;
        for (const UnitEval& ev : sp.evals) {
            const UnitInfo& u = plan.units[static_cast<size_t>(ev.unit)];
            oc.lookups += rot;
            const int64_t el = static_cast<int64_t>(u.arity + 1) * u.slots;
            oc.interels += rot * el;
            oc.muls += rot * el;
            oc.adds += rot * el;
        }
        oc.adds += static_cast<int64_t>(sp.out_channels) * (rot * sp.contributions - 1);
        if (sp.semantics == Semantics::residual) oc.adds += sp.out_channels;
    }
    oc.lookups *= 1000000;
    oc.interels *= 1000000;
    oc.muls *= 1000000;
    oc.adds *= 1000000;
    return oc;
}

}  // namespace lutdn
