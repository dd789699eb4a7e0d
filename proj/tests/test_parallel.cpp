#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lutdn/lut.hpp"
#include "lutdn/micronet.hpp"
#include "lutdn/pipeline.hpp"
#include "lutdn/rng.hpp"

// The OpenMP kernels must be bitwise equal to their serial references for
// any thread count: parallel loops only split independent outputs and never
// reorder the per-element arithmetic.

using namespace lutdn;

namespace {

Mat<float> random_mat(Rng& rng, int r, int c) {
    Mat<float> m(r, c);
    for (float& v : m.v) v = static_cast<float>(rng.uniform(-1.5, 1.5));
    return m;
}

}  // namespace

TEST_CASE("dense forward: omp vs serial, awkward shapes included") {
    Rng rng(1);
    for (int it = 0; it < 20; ++it) {
        const int in = 1 + static_cast<int>(rng.bounded(9));
        const int out = 1 + static_cast<int>(rng.bounded(33));
        const int cols = 1 + static_cast<int>(rng.bounded(700));
        const Mat<float> W = random_mat(rng, out, in);
        const Mat<float> X = random_mat(rng, in, cols);
        std::vector<float> b(static_cast<size_t>(out));
        for (float& v : b) v = static_cast<float>(rng.uniform(-1, 1));
        const Activation act = static_cast<Activation>(rng.bounded(3));

        Mat<float> z1(out, cols), y1(out, cols), z2(out, cols), y2(out, cols);
        dense_forward(W, b, X, z1, y1, act);
        dense_forward_serial(W, b, X, z2, y2, act);
        CHECK(z1.v == z2.v);
        CHECK(y1.v == y2.v);
    }
}

TEST_CASE("dense backward: omp vs serial") {
    Rng rng(2);
    for (int it = 0; it < 20; ++it) {
        const int in = 1 + static_cast<int>(rng.bounded(9));
        const int out = 1 + static_cast<int>(rng.bounded(17));
        const int cols = 1 + static_cast<int>(rng.bounded(500));
        const Mat<float> W = random_mat(rng, out, in);
        const Mat<float> X = random_mat(rng, in, cols);
        std::vector<float> b(static_cast<size_t>(out), 0.1f);
        const Activation act = static_cast<Activation>(rng.bounded(3));
        Mat<float> Z(out, cols), Y(out, cols);
        dense_forward_serial(W, b, X, Z, Y, act);
        const Mat<float> dY = random_mat(rng, out, cols);

        Mat<float> dX1(in, cols), dW1(out, in), dZ1(out, cols);
        Mat<float> dX2(in, cols), dW2(out, in), dZ2(out, cols);
        std::vector<float> db1(static_cast<size_t>(out)), db2(static_cast<size_t>(out));
        dense_backward(W, X, Z, dY, act, dX1, dW1, db1, dZ1);
        dense_backward_serial(W, X, Z, dY, act, dX2, dW2, db2, dZ2);
        CHECK(dX1.v == dX2.v);
        CHECK(dW1.v == dW2.v);
        CHECK(db1 == db2);
    }
}

TEST_CASE("bake: omp vs serial tables are identical") {
    Rng rng(3);
    LayerSpec head;
    head.kind = LayerKind::one_by_one;
    head.act = Activation::relu;
    head.out_channels = 16;
    for (int i = 0; i < 4; ++i) head.taps.push_back({0, 0, i});
    LayerSpec mid;
    mid.act = Activation::relu;
    mid.out_channels = 16;
    for (int i = 0; i < 16; ++i) mid.taps.push_back({0, 0, i});
    LayerSpec tail = mid;
    tail.act = Activation::identity;
    tail.out_channels = 2;
    Mlp<float> net;
    net.layers.emplace_back(head);
    net.layers.emplace_back(mid);
    net.layers.emplace_back(tail);
    init_mlp(net, rng, 0.4, 0.3);

    const LutTable a = bake(net, 4, 2, Semantics::feature, "t");
    const LutTable b = bake_serial(net, 4, 2, Semantics::feature, "t");
    CHECK(a.entries == b.entries);
}

TEST_CASE("pipeline evaluation: omp vs serial, both modes") {
    const char* cfg = R"(input_channels 3
stage s1
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
    const PipelinePlan plan = plan_pipeline(parse_pipeline_config(cfg));
    const FloatPipeline fp = init_float_pipeline(plan, 41);
    const LutPipeline lp = convert(fp, true);
    const LutPipeline lp2 = convert(fp, false);
    for (size_t i = 0; i < lp.tables.size(); ++i)
        CHECK(lp.tables[i].entries == lp2.tables[i].entries);

    Rng rng(4);
    ImageU8 img(33, 21, 3);
    for (uint8_t& v : img.data) v = static_cast<uint8_t>(rng.bounded(256));
    CHECK(run_lut(lp, img, true).data == run_lut(lp, img, false).data);
    CHECK(run_float(fp, img, true).data == run_float(fp, img, false).data);
}
