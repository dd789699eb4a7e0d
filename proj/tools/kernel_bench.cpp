// Compares the OpenMP kernels against their serial reference twins: dense
// forward/backward, table baking, and full-pipeline inference. Both variants
// fix the arithmetic order, so outputs must match bitwise; the bench verifies
// that while timing.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "lutdn/dataset.hpp"
#include "lutdn/lut.hpp"
#include "lutdn/micronet.hpp"
#include "lutdn/pipeline.hpp"
#include "lutdn/rng.hpp"

using namespace lutdn;

namespace {

double best_ms(const std::function<void()>& fn, int reps) {
    double best = 1e30;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        if (ms < best) best = ms;
    }
    return best;
}

void report(const char* name, double serial_ms, double omp_ms, bool identical) {
    std::printf("%-22s serial %9.3f ms   parallel %9.3f ms   x%.2f   %s\n", name, serial_ms,
                omp_ms, serial_ms / omp_ms, identical ? "outputs identical" : "MISMATCH");
}

Mat<float> random_mat(int r, int c, Rng& rng) {
    Mat<float> m(r, c);
    for (float& x : m.v) x = static_cast<float>(rng.uniform53() * 2.0 - 1.0);
    return m;
}

Mlp<float> bench_net(int arity, int slots) {
    LayerSpec head;
    head.kind = LayerKind::one_by_one;
    head.act = Activation::relu;
    head.out_channels = kHiddenWidth;
    for (int i = 0; i < arity; ++i) head.taps.push_back({0, 0, i});
    LayerSpec mid;
    mid.act = Activation::relu;
    mid.out_channels = kHiddenWidth;
    for (int i = 0; i < kHiddenWidth; ++i) mid.taps.push_back({0, 0, i});
    LayerSpec tail = mid;
    tail.act = Activation::identity;
    tail.out_channels = slots;
    Mlp<float> net;
    net.layers.emplace_back(head);
    net.layers.emplace_back(mid);
    net.layers.emplace_back(mid);
    net.layers.emplace_back(tail);
    return net;
}

}  // namespace

int main() {
    std::printf("threads: %d\n\n", omp_get_max_threads());
    Rng rng(99);
    const int reps = 5;

    {  // dense forward, a bake-sized batch: 16x4 weights over 80000 columns
        const Mat<float> W = random_mat(16, 4, rng);
        std::vector<float> b(16);
        for (float& x : b) x = static_cast<float>(rng.uniform53() - 0.5);
        const Mat<float> X = random_mat(4, 80000, rng);
        Mat<float> Zs(16, X.cols), Ys(16, X.cols), Zp(16, X.cols), Yp(16, X.cols);
        const double s = best_ms(
            [&] { dense_forward_serial(W, b, X, Zs, Ys, Activation::relu); }, reps);
        const double p =
            best_ms([&] { dense_forward(W, b, X, Zp, Yp, Activation::relu); }, reps);
        report("dense forward", s, p, Ys.v == Yp.v && Zs.v == Zp.v);
    }

    {  // dense backward on a 16x16 hidden layer
        const Mat<float> W = random_mat(16, 16, rng);
        const Mat<float> X = random_mat(16, 80000, rng);
        const Mat<float> Z = random_mat(16, 80000, rng);
        const Mat<float> dY = random_mat(16, 80000, rng);
        Mat<float> dXs(16, X.cols), dWs(16, 16), dZs(16, X.cols);
        Mat<float> dXp(16, X.cols), dWp(16, 16), dZp(16, X.cols);
        std::vector<float> dbs(16), dbp(16);
        const double s = best_ms(
            [&] { dense_backward_serial(W, X, Z, dY, Activation::relu, dXs, dWs, dbs, dZs); },
            reps);
        const double p = best_ms(
            [&] { dense_backward(W, X, Z, dY, Activation::relu, dXp, dWp, dbp, dZp); }, reps);
        report("dense backward", s, p,
               dXs.v == dXp.v && dWs.v == dWp.v && dbs == dbp);
    }

    {  // baking a 4D single-slot table: 17^4 probes through the micro-net
        Rng nrng(7);
        Mlp<float> net = bench_net(4, 1);
        init_mlp(net, nrng, 0.5f, 0.5f);
        LutTable ts, tp;
        const double s = best_ms(
            [&] { ts = bake_serial(net, 4, 1, Semantics::feature, "bench"); }, reps);
        const double p =
            best_ms([&] { tp = bake(net, 4, 1, Semantics::feature, "bench"); }, reps);
        report("bake 17^4", s, p, ts.entries == tp.entries);
    }

    {  // full table-pipeline inference on a 320x320 image
        const PipelinePlan plan = plan_pipeline(parse_pipeline_config(builtin_config("base")));
        const FloatPipeline fp = init_float_pipeline(plan, 11);
        const LutPipeline lp = convert(fp);
        const ImageU8 img = generate_texture(3, 42, 320);
        ImageU8 outs, outp;
        const double s = best_ms([&] { outs = run_lut(lp, img, false); }, reps);
        const double p = best_ms([&] { outp = run_lut(lp, img, true); }, reps);
        report("run_lut 320px", s, p, outs.data == outp.data);
    }

    {  // float-pipeline inference, the conversion-check path
        const PipelinePlan plan = plan_pipeline(parse_pipeline_config(builtin_config("base")));
        const FloatPipeline fp = init_float_pipeline(plan, 11);
        const ImageU8 img = generate_texture(3, 42, 160);
        ImageU8 outs, outp;
        const double s = best_ms([&] { outs = run_float(fp, img, false); }, reps);
        const double p = best_ms([&] { outp = run_float(fp, img, true); }, reps);
        report("run_float 160px", s, p, outs.data == outp.data);
    }

    return 0;
}
