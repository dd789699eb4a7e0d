// Command-line front end: train, bake, convert, denoise, fine-tune, analyze,
// report, benchmark. Exit codes: 0 ok, 2 bad configuration or usage, 3 I/O
// failure, 4 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lutdn/dataset.hpp"
#include "lutdn/errors.hpp"
#include "lutdn/finetune.hpp"
#include "lutdn/kernel_geometry.hpp"
#include "lutdn/lut.hpp"
#include "lutdn/metrics.hpp"
#include "lutdn/noise.hpp"
#include "lutdn/pipeline.hpp"
#include "lutdn/train.hpp"

using namespace lutdn;
using nlohmann::json;

namespace {

PipelineConfig resolve_config(const std::string& name_or_path) {
    if (const char* text = builtin_config(name_or_path))
        return parse_pipeline_config(text);
    return load_pipeline_config(name_or_path);
}

std::vector<std::string> png_paths(const std::string& dir) {
    std::vector<std::string> paths;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec))
        if (entry.path().extension() == ".png") paths.push_back(entry.path().string());
    if (ec) throw IoError("cannot read directory " + dir + ": " + ec.message());
    if (paths.empty()) throw IoError("no .png files in " + dir);
    std::sort(paths.begin(), paths.end());
    return paths;
}

std::vector<ImageU8> load_dir(const std::string& dir) {
    std::vector<ImageU8> images;
    for (const std::string& p : png_paths(dir)) images.push_back(load_png(p));
    return images;
}

KernelPattern pattern_by_name(const std::string& name) {
    if (name == "lshape") return lshape_pattern();
    if (name == "square2") return square2_pattern();
    if (name == "single") return single_pattern();
    if (name == "pcm") return pcm_pattern();
    throw ConfigError("unknown pattern '" + name + "' (lshape|square2|single|pcm)");
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LUT-based color image denoiser"};
    app.require_subcommand(1);

    // ---- train ----------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train pipeline blocks on noisy/clean pairs");
    std::string tr_config = "reference", tr_data, tr_out, tr_init_tail, tr_loss_out;
    TrainConfig tr_cfg;
    train_cmd->add_option("--config", tr_config, "pipeline config file or base|reference");
    train_cmd->add_option("--data", tr_data, "directory of clean training PNGs")->required();
    train_cmd->add_option("--out", tr_out, "output weight checkpoint (.dnwt)")->required();
    train_cmd->add_option("--iterations", tr_cfg.iterations, "training iterations");
    train_cmd->add_option("--batch", tr_cfg.batch_size, "patches per iteration");
    train_cmd->add_option("--patch", tr_cfg.patch_size, "square patch side");
    train_cmd->add_option("--sigma", tr_cfg.sigma, "noise sigma in 0..255 units");
    train_cmd->add_option("--seed", tr_cfg.seed, "run seed");
    train_cmd->add_option("--lr-max", tr_cfg.lr_max, "peak learning rate");
    train_cmd->add_option("--lr-min", tr_cfg.lr_min, "final learning rate");
    train_cmd->add_option("--warmup", tr_cfg.warmup_direct,
                          "iterations with the loss taken at stage 0");
    train_cmd->add_option("--init-tail", tr_init_tail,
                          "checkpoint for the trailing units; leading units stay fresh and "
                          "are the only ones trained");
    train_cmd->add_option("--loss-out", tr_loss_out, "write per-iteration loss values");
    train_cmd->callback([&] {
        const PipelinePlan plan = plan_pipeline(resolve_config(tr_config));
        FloatPipeline fp = init_float_pipeline(plan, tr_cfg.seed);
        if (!tr_init_tail.empty()) {
            const FloatPipeline probe = init_float_pipeline(plan, tr_cfg.seed);
            // unit count in the checkpoint decides where the tail starts
            int first = static_cast<int>(plan.units.size());
            for (;; --first) {
                try {
                    load_weights_into(fp, tr_init_tail, first);
                    break;
                } catch (const ConfigError&) {
                    if (first == 0) throw;
                }
            }
            tr_cfg.trainable_prefix = first;
            std::printf("tail from %s fills units %d..%zu; training units 0..%d\n",
                        tr_init_tail.c_str(), first, plan.units.size() - 1, first - 1);
        }
        const std::vector<ImageU8> images = load_dir(tr_data);
        const auto t0 = std::chrono::steady_clock::now();
        const TrainResult res = train(fp, images, tr_cfg);
        if (res.diverged) {
            save_weights(fp, tr_out);
            throw NumericError("training diverged; last good snapshot written to " + tr_out);
        }
        save_weights(fp, tr_out);
        if (!tr_loss_out.empty()) {
            std::ofstream f(tr_loss_out);
            if (!f) throw IoError("cannot create " + tr_loss_out);
            for (double l : res.loss_history) f << l << "\n";
        }
        std::printf("trained %d iterations in %.1f s, final loss %.6f -> %s\n",
                    tr_cfg.iterations, elapsed_ms(t0) / 1000.0, res.final_loss,
                    tr_out.c_str());
        if (res.skipped_steps)
            std::printf("skipped %lld non-finite layer updates\n",
                        static_cast<long long>(res.skipped_steps));
    });

    // ---- bake -----------------------------------------------------------
    auto* bake_cmd = app.add_subcommand("bake", "bake one unit of a checkpoint into a table");
    std::string bk_config = "reference", bk_model, bk_unit, bk_out;
    bool bk_serial = false;
    bake_cmd->add_option("--config", bk_config, "pipeline config file or base|reference");
    bake_cmd->add_option("--model", bk_model, "weight checkpoint (.dnwt)")->required();
    bake_cmd->add_option("--unit", bk_unit, "unit id, e.g. f1.b0.rg")->required();
    bake_cmd->add_option("--out", bk_out, "output table (.dnlt)")->required();
    bake_cmd->add_flag("--serial", bk_serial, "use the serial reference kernels");
    bake_cmd->callback([&] {
        const PipelinePlan plan = plan_pipeline(resolve_config(bk_config));
        const FloatPipeline fp = load_weights(plan, bk_model);
        for (size_t ui = 0; ui < plan.units.size(); ++ui) {
            if (plan.units[ui].id != bk_unit) continue;
            const UnitInfo& info = plan.units[ui];
            const LutTable t =
                bk_serial ? bake_serial(fp.units[ui], info.arity, info.slots, info.semantics,
                                        info.id)
                          : bake(fp.units[ui], info.arity, info.slots, info.semantics, info.id);
            save_table(bk_out, t);
            std::printf("baked %s: %dD, %d slot(s), %zu entries -> %s\n", info.id.c_str(),
                        info.arity, info.slots, t.entries.size(), bk_out.c_str());
            return;
        }
        throw ConfigError("unit '" + bk_unit + "' not in this pipeline");
    });

    // ---- convert --------------------------------------------------------
    auto* conv_cmd = app.add_subcommand("convert", "bake every unit into a table directory");
    std::string cv_config = "reference", cv_model, cv_out;
    bool cv_serial = false;
    conv_cmd->add_option("--config", cv_config, "pipeline config file or base|reference");
    conv_cmd->add_option("--model", cv_model, "weight checkpoint (.dnwt)")->required();
    conv_cmd->add_option("--out-dir", cv_out, "output directory for manifest + tables")
        ->required();
    conv_cmd->add_flag("--serial", cv_serial, "use the serial reference kernels");
    conv_cmd->callback([&] {
        const PipelinePlan plan = plan_pipeline(resolve_config(cv_config));
        const FloatPipeline fp = load_weights(plan, cv_model);
        const auto t0 = std::chrono::steady_clock::now();
        const LutPipeline lp = convert(fp, !cv_serial);
        save_lut_pipeline(lp, cv_out);
        size_t bytes = 0;
        for (const LutTable& t : lp.tables) bytes += t.entries.size();
        std::printf("baked %zu tables (%zu entry bytes) in %.1f ms -> %s (hash %016llx)\n",
                    lp.tables.size(), bytes, elapsed_ms(t0), cv_out.c_str(),
                    static_cast<unsigned long long>(pipeline_hash(lp)));
    });

    // ---- denoise --------------------------------------------------------
    auto* den_cmd = app.add_subcommand("denoise", "run a table pipeline on one image");
    std::string dn_model, dn_in, dn_out;
    bool dn_serial = false;
    den_cmd->add_option("--model", dn_model, "manifest.txt of a converted pipeline")
        ->required();
    den_cmd->add_option("--in", dn_in, "input PNG")->required();
    den_cmd->add_option("--out", dn_out, "output PNG")->required();
    den_cmd->add_flag("--serial", dn_serial, "use the serial reference kernels");
    den_cmd->callback([&] {
        const LutPipeline lp = load_lut_pipeline(dn_model);
        const ImageU8 img = load_png(dn_in);
        const auto t0 = std::chrono::steady_clock::now();
        const ImageU8 out = run_lut(lp, img, !dn_serial);
        const double ms = elapsed_ms(t0);
        save_png(dn_out, out);
        std::printf("%dx%d denoised in %.1f ms (%.2f Mpx/s) -> %s\n", img.width, img.height,
                    ms, img.width * img.height / ms / 1000.0, dn_out.c_str());
    });

    // ---- finetune-lut ---------------------------------------------------
    auto* ft_cmd = app.add_subcommand("finetune-lut",
                                      "optimize baked table entries through the interpolation");
    std::string ft_model, ft_data, ft_heldout, ft_out;
    FinetuneConfig ft_cfg;
    ft_cmd->add_option("--model", ft_model, "manifest.txt of a converted pipeline")
        ->required();
    ft_cmd->add_option("--data", ft_data, "directory of clean training PNGs")->required();
    ft_cmd->add_option("--heldout", ft_heldout, "directory of clean held-out PNGs")
        ->required();
    ft_cmd->add_option("--out-dir", ft_out, "output directory for the tuned pipeline")
        ->required();
    ft_cmd->add_option("--iterations", ft_cfg.iterations, "fine-tune iterations");
    ft_cmd->add_option("--lr", ft_cfg.lr, "learning rate");
    ft_cmd->add_option("--batch", ft_cfg.batch_size, "patches per iteration");
    ft_cmd->add_option("--patch", ft_cfg.patch_size, "square patch side");
    ft_cmd->add_option("--sigma", ft_cfg.sigma, "noise sigma");
    ft_cmd->add_option("--seed", ft_cfg.seed, "run seed");
    ft_cmd->callback([&] {
        LutPipeline lp = load_lut_pipeline(ft_model);
        const std::vector<ImageU8> images = load_dir(ft_data);
        const std::vector<ImageU8> heldout = load_dir(ft_heldout);
        const auto t0 = std::chrono::steady_clock::now();
        const FinetuneReport rep = finetune(lp, images, heldout, ft_cfg);
        save_lut_pipeline(lp, ft_out);
        std::printf("fine-tuned %d iterations in %.1f s: held-out %.3f -> %.3f dB%s -> %s\n",
                    ft_cfg.iterations, elapsed_ms(t0) / 1000.0, rep.heldout_cpsnr_before,
                    rep.heldout_cpsnr_after, rep.reverted ? " (reverted)" : "",
                    ft_out.c_str());
    });

    // ---- plugin-wrap ----------------------------------------------------
    auto* pw_cmd = app.add_subcommand("plugin-wrap",
                                      "prepend a residual pcm stage to a spatial-only config");
    std::string pw_config, pw_out;
    pw_cmd->add_option("--config", pw_config, "base pipeline config file or base")
        ->required();
    pw_cmd->add_option("--out", pw_out, "wrapped config file")->required();
    pw_cmd->callback([&] {
        const PipelineConfig wrapped = pcm_plugin(resolve_config(pw_config));
        plan_pipeline(wrapped);  // validate before writing
        std::ofstream f(pw_out);
        if (!f) throw IoError("cannot create " + pw_out);
        f << canonical_config_text(wrapped);
        std::printf("wrapped config -> %s\n", pw_out.c_str());
    });

    // ---- analyze-kernel -------------------------------------------------
    auto* ak_cmd = app.add_subcommand("analyze-kernel",
                                      "rotation-orbit coverage of a kernel pattern");
    std::string ak_pattern = "lshape";
    int ak_search = 0;
    bool ak_csv = false;
    ak_cmd->add_option("--pattern", ak_pattern, "lshape|square2|single|pcm");
    ak_cmd->add_option("--search", ak_search,
                       "list all non-overlapping anchor-rooted patterns of this many taps");
    ak_cmd->add_flag("--csv", ak_csv, "emit CSV instead of a grid");
    ak_cmd->callback([&] {
        if (ak_search > 0) {
            const auto found = find_nonoverlapping(ak_search);
            std::printf("%zu non-overlapping %d-tap patterns\n", found.size(), ak_search);
            for (const KernelPattern& p : found) {
                std::string taps;
                for (const auto& [dy, dx] : p.taps)
                    taps += "(" + std::to_string(dy) + "," + std::to_string(dx) + ")";
                std::printf("  %s\n", taps.c_str());
            }
            return;
        }
        const KernelPattern p = pattern_by_name(ak_pattern);
        std::fputs(render_orbit(p, orbit_analysis(p), ak_csv).c_str(), stdout);
    });

    // ---- storage-report -------------------------------------------------
    auto* sr_cmd = app.add_subcommand("storage-report",
                                      "exact table sizes for receptive-field choices");
    int sr_k = 0, sr_c = 0;
    std::string sr_report = "text";
    sr_cmd->add_option("--k", sr_k, "kernel side for a k x k x c footprint");
    sr_cmd->add_option("--c", sr_c, "channel depth for a k x k x c footprint");
    sr_cmd->add_option("--report", sr_report, "text|json")
        ->check(CLI::IsMember({"text", "json"}));
    sr_cmd->callback([&] {
        std::vector<LutSize> rows;
        for (int d = 1; d <= 12; ++d) rows.push_back(lut_size_dims(d));
        if (sr_k > 0 && sr_c > 0) rows.push_back(lut_size_bytes(sr_k, sr_c));
        if (sr_report == "json") {
            json out = json::array();
            for (const LutSize& r : rows)
                out.push_back({{"dims", r.dims},
                               {"bytes", r.bytes_exact},
                               {"human", r.human}});
            std::printf("%s\n", out.dump(2).c_str());
        } else {
            std::printf("%4s  %22s  %10s\n", "dims", "bytes", "approx");
            for (const LutSize& r : rows)
                std::printf("%4d  %22s  %10s\n", r.dims, r.bytes_exact.c_str(),
                            r.human.c_str());
        }
    });

    // ---- bench ----------------------------------------------------------
    auto* bn_cmd = app.add_subcommand("bench",
                                      "noisy-vs-denoised quality and speed on a clean set");
    std::string bn_model, bn_clean, bn_report = "text";
    double bn_sigma = 25.0;
    uint64_t bn_seed = 1;
    bn_cmd->add_option("--model", bn_model, "manifest.txt of a converted pipeline")
        ->required();
    bn_cmd->add_option("--clean", bn_clean, "directory of clean PNGs")->required();
    bn_cmd->add_option("--sigma", bn_sigma, "noise sigma");
    bn_cmd->add_option("--seed", bn_seed, "noise seed");
    bn_cmd->add_option("--report", bn_report, "text|json")
        ->check(CLI::IsMember({"text", "json"}));
    bn_cmd->callback([&] {
        const LutPipeline lp = load_lut_pipeline(bn_model);
        const std::vector<std::string> paths = png_paths(bn_clean);
        json items = json::array();
        double noisy_db = 0, out_db = 0, noisy_ss = 0, out_ss = 0, mpx = 0, ms = 0;
        for (size_t i = 0; i < paths.size(); ++i) {
            const ImageU8 clean = load_png(paths[i]);
            Rng rng(bn_seed * 2654435761ull + i);
            const ImageU8 noisy = add_noise(clean, NoiseSpec{bn_sigma}, rng);
            const auto t0 = std::chrono::steady_clock::now();
            const ImageU8 out = run_lut(lp, noisy);
            const double t = elapsed_ms(t0);
            const double ndb = cpsnr(noisy, clean), odb = cpsnr(out, clean);
            const double nss = ssim(noisy, clean), oss = ssim(out, clean);
            noisy_db += ndb;
            out_db += odb;
            noisy_ss += nss;
            out_ss += oss;
            mpx += clean.width * clean.height / 1e6;
            ms += t;
            items.push_back({{"image", paths[i]},
                             {"noisy_cpsnr", ndb},
                             {"denoised_cpsnr", odb},
                             {"noisy_ssim", nss},
                             {"denoised_ssim", oss},
                             {"ms", t}});
        }
        const double n = static_cast<double>(paths.size());
        const OpCount oc = op_count(lp.plan);
        json summary = {{"images", paths.size()},
                        {"sigma", bn_sigma},
                        {"noisy_cpsnr", noisy_db / n},
                        {"denoised_cpsnr", out_db / n},
                        {"noisy_ssim", noisy_ss / n},
                        {"denoised_ssim", out_ss / n},
                        {"mpx_per_s", mpx / (ms / 1000.0)},
                        {"lookups_per_mpx", oc.lookups},
                        {"muls_per_mpx", oc.muls},
                        {"adds_per_mpx", oc.adds}};
        if (bn_report == "json") {
            std::printf("%s\n", json{{"summary", summary}, {"items", items}}.dump(2).c_str());
        } else {
            std::printf("%zu images, sigma %.1f\n", paths.size(), bn_sigma);
            std::printf("noisy:    %7.3f dB cpsnr, %6.4f ssim\n", noisy_db / n, noisy_ss / n);
            std::printf("denoised: %7.3f dB cpsnr, %6.4f ssim\n", out_db / n, out_ss / n);
            std::printf("throughput %.2f Mpx/s; per Mpx: %lld lookups, %lld muls, %lld adds\n",
                        mpx / (ms / 1000.0), static_cast<long long>(oc.lookups),
                        static_cast<long long>(oc.muls), static_cast<long long>(oc.adds));
        }
    });

    // ---- gen-data -------------------------------------------------------
    auto* gd_cmd = app.add_subcommand("gen-data", "write the synthetic texture set");
    std::string gd_out;
    int gd_count = 8, gd_size = 160;
    uint64_t gd_seed = 1000;
    std::vector<int> gd_recipes;
    gd_cmd->add_option("--out", gd_out, "output directory")->required();
    gd_cmd->add_option("--count", gd_count, "number of images");
    gd_cmd->add_option("--size", gd_size, "square image side");
    gd_cmd->add_option("--seed", gd_seed, "base seed; image i uses seed+i");
    gd_cmd->add_option("--recipes", gd_recipes, "explicit recipe per image, e.g. 2,4,5,6")
        ->delimiter(',');
    gd_cmd->callback([&] {
        std::filesystem::create_directories(gd_out);
        if (!gd_recipes.empty()) gd_count = static_cast<int>(gd_recipes.size());
        for (int i = 0; i < gd_count; ++i) {
            const int recipe = gd_recipes.empty() ? i % kTextureRecipes : gd_recipes[i];
            const ImageU8 img =
                generate_texture(recipe, gd_seed + static_cast<uint64_t>(i), gd_size);
            const std::string path = gd_out + "/tex" + std::to_string(i) + ".png";
            save_png(path, img);
            std::printf("wrote %s\n", path.c_str());
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
    return 0;
}
