#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lutdn/errors.hpp"
#include "lutdn/rng.hpp"

// Minimal dense-layer engine for the constrained-receptive-field blocks.
// Everything is templated on the scalar so the production float path and the
// double path used by finite-difference tests share one implementation.
// The hot kernels (dense forward/backward) exist in two variants: a plain
// serial reference and an OpenMP one. Both run the per-element arithmetic in
// the same order, so results are bitwise identical for any thread count.

namespace lutdn {

enum class Activation : uint8_t { relu = 0, identity = 1, clamp01 = 2 };
enum class LayerKind : uint8_t { pcm_head = 0, l_shaped = 1, one_by_one = 2, fusion_group = 3 };

struct Tap {
    int dy = 0;
    int dx = 0;
    int channel = 0;
    bool operator==(const Tap&) const = default;
};

// Static description of one affine layer: which input samples it gathers and
// how the result is activated. Weights live in Layer<T>.
struct LayerSpec {
    LayerKind kind = LayerKind::one_by_one;
    Activation act = Activation::identity;
    int out_channels = 0;
    std::vector<Tap> taps;

    void validate() const;
    int max_dy() const;
    int max_dx() const;
};

inline int LayerSpec::max_dy() const {
    int m = 0;
    for (const Tap& t : taps) m = std::max(m, t.dy);
    return m;
}

inline int LayerSpec::max_dx() const {
    int m = 0;
    for (const Tap& t : taps) m = std::max(m, t.dx);
    return m;
}

inline void LayerSpec::validate() const {
    if (out_channels <= 0) throw ConfigError("layer: out_channels must be positive");
    if (taps.empty()) throw ConfigError("layer: tap list empty");
    switch (kind) {
        case LayerKind::pcm_head: {
            if (taps.size() != 4) throw ConfigError("pcm-head: expected exactly 4 taps");
            const int c = taps[0].channel, cp = taps[2].channel;
            const bool ok = taps[0] == Tap{0, 0, c} && taps[1] == Tap{0, 1, c} &&
                            taps[2] == Tap{0, 0, cp} && taps[3] == Tap{0, 1, cp} && c != cp;
            if (!ok) throw ConfigError("pcm-head: taps must be (0,0,c),(0,1,c),(0,0,c'),(0,1,c')");
            break;
        }
        case LayerKind::l_shaped: {
            if (taps.size() != 3) throw ConfigError("l-shaped: expected exactly 3 taps");
            const int c = taps[0].channel;
            const bool ok = taps[0] == Tap{0, 0, c} && taps[1] == Tap{0, 1, c} &&
                            taps[2] == Tap{1, 1, c};
            if (!ok) throw ConfigError("l-shaped: taps must be (0,0),(0,1),(1,1) on one channel");
            break;
        }
        case LayerKind::one_by_one:
        case LayerKind::fusion_group: {
            std::vector<int> chans;
            for (const Tap& t : taps) {
                if (t.dy != 0 || t.dx != 0)
                    throw ConfigError("1x1 layer: all taps must sit at (0,0)");
                chans.push_back(t.channel);
            }
            if (kind == LayerKind::fusion_group) {
                std::sort(chans.begin(), chans.end());
                chans.erase(std::unique(chans.begin(), chans.end()), chans.end());
                if (chans.size() > 4)
                    throw ConfigError("fusion-group: more than 4 distinct input channels");
            }
            break;
        }
    }
}

// ---------------------------------------------------------------------------
// Matrix (rows x cols, row-major, columns are the data-parallel axis).

template <class T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, T(0)) {}

    T* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const T* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
    T& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    T at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return v.size(); }
    void zero() { std::fill(v.begin(), v.end(), T(0)); }
};

// ---------------------------------------------------------------------------
// Tensor: dense (N,C,H,W) activations, with an optional same-shape gradient.

template <class T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;
    std::vector<T> grad;  // empty means "no gradient attached"

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

    size_t numel() const { return v.size(); }
    size_t plane() const { return static_cast<size_t>(h) * w; }
    size_t idx(int ni, int ci, int y, int x) const {
        return ((static_cast<size_t>(ni) * c + ci) * h + y) * w + x;
    }
    T& at(int ni, int ci, int y, int x) { return v[idx(ni, ci, y, x)]; }
    T at(int ni, int ci, int y, int x) const { return v[idx(ni, ci, y, x)]; }

    void ensure_grad() {
        if (grad.size() != v.size()) grad.assign(v.size(), T(0));
    }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

// ---------------------------------------------------------------------------
// Activations.

template <class T>
inline T apply_act(Activation a, T z) {
    switch (a) {
        case Activation::relu: return z > T(0) ? z : T(0);
        case Activation::identity: return z;
        case Activation::clamp01: return z < T(0) ? T(0) : (z > T(1) ? T(1) : z);
    }
    return z;
}

template <class T>
inline T act_deriv(Activation a, T z) {
    switch (a) {
        case Activation::relu: return z > T(0) ? T(1) : T(0);
        case Activation::identity: return T(1);
        case Activation::clamp01: return (z > T(0) && z < T(1)) ? T(1) : T(0);
    }
    return T(1);
}

// ---------------------------------------------------------------------------
// Dense kernels. Y = act(W X + b). Z is the pre-activation, kept for backward.
// Serial variants are the reference the OpenMP ones are tested against.

// Long reductions run over 16 independent lanes so the compiler may vectorize
// without reassociating. The lane count is fixed, not tied to the target ISA,
// so serial and parallel variants sum in the same order and match bitwise.
inline constexpr int kReduceLanes = 16;

template <class T>
inline T lane_dot(const T* a, const T* b, int n) {
    T lane[kReduceLanes] = {};
    const int nb = n - n % kReduceLanes;
    for (int j = 0; j < nb; j += kReduceLanes)
        for (int k = 0; k < kReduceLanes; ++k) lane[k] += a[j + k] * b[j + k];
    T s = T(0);
    for (int k = 0; k < kReduceLanes; ++k) s += lane[k];
    for (int j = nb; j < n; ++j) s += a[j] * b[j];
    return s;
}

template <class T>
inline T lane_sum(const T* a, int n) {
    T lane[kReduceLanes] = {};
    const int nb = n - n % kReduceLanes;
    for (int j = 0; j < nb; j += kReduceLanes)
        for (int k = 0; k < kReduceLanes; ++k) lane[k] += a[j + k];
    T s = T(0);
    for (int k = 0; k < kReduceLanes; ++k) s += lane[k];
    for (int j = nb; j < n; ++j) s += a[j];
    return s;
}

template <class T>
void dense_forward_serial(const Mat<T>& W, const std::vector<T>& b, const Mat<T>& X,
                          Mat<T>& Z, Mat<T>& Y, Activation act) {
    const int out = W.rows, in = W.cols, n = X.cols;
    for (int o = 0; o < out; ++o) {
        T* z = Z.row(o);
        for (int j = 0; j < n; ++j) z[j] = b[o];
        for (int i = 0; i < in; ++i) {
            const T wv = W.at(o, i);
            const T* x = X.row(i);
            for (int j = 0; j < n; ++j) z[j] += wv * x[j];
        }
        T* y = Y.row(o);
        for (int j = 0; j < n; ++j) y[j] = apply_act(act, z[j]);
    }
}

template <class T>
void dense_forward(const Mat<T>& W, const std::vector<T>& b, const Mat<T>& X,
                   Mat<T>& Z, Mat<T>& Y, Activation act) {
    const int out = W.rows, in = W.cols, n = X.cols;
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out; ++o) {
        T* z = Z.row(o);
        for (int j = 0; j < n; ++j) z[j] = b[o];
        for (int i = 0; i < in; ++i) {
            const T wv = W.at(o, i);
            const T* x = X.row(i);
            for (int j = 0; j < n; ++j) z[j] += wv * x[j];
        }
        T* y = Y.row(o);
        for (int j = 0; j < n; ++j) y[j] = apply_act(act, z[j]);
    }
}

// Backward. dY is the gradient w.r.t. the activated output; fills dX, dW, db.
template <class T>
void dense_backward_serial(const Mat<T>& W, const Mat<T>& X, const Mat<T>& Z,
                           const Mat<T>& dY, Activation act, Mat<T>& dX, Mat<T>& dW,
                           std::vector<T>& db, Mat<T>& dZ) {
    const int out = W.rows, in = W.cols, n = X.cols;
    for (int o = 0; o < out; ++o) {
        const T* zy = Z.row(o);
        const T* gy = dY.row(o);
        T* gz = dZ.row(o);
        for (int j = 0; j < n; ++j) gz[j] = gy[j] * act_deriv(act, zy[j]);
    }
    for (int i = 0; i < in; ++i) {
        T* gx = dX.row(i);
        for (int j = 0; j < n; ++j) gx[j] = T(0);
        for (int o = 0; o < out; ++o) {
            const T wv = W.at(o, i);
            const T* gz = dZ.row(o);
            for (int j = 0; j < n; ++j) gx[j] += wv * gz[j];
        }
    }
    for (int o = 0; o < out; ++o) {
        const T* gz = dZ.row(o);
        db[o] = lane_sum(gz, n);
        for (int i = 0; i < in; ++i) dW.at(o, i) = lane_dot(gz, X.row(i), n);
    }
}

template <class T>
void dense_backward(const Mat<T>& W, const Mat<T>& X, const Mat<T>& Z, const Mat<T>& dY,
                    Activation act, Mat<T>& dX, Mat<T>& dW, std::vector<T>& db, Mat<T>& dZ) {
    const int out = W.rows, in = W.cols, n = X.cols;
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out; ++o) {
        const T* zy = Z.row(o);
        const T* gy = dY.row(o);
        T* gz = dZ.row(o);
        for (int j = 0; j < n; ++j) gz[j] = gy[j] * act_deriv(act, zy[j]);
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < in; ++i) {
        T* gx = dX.row(i);
        for (int j = 0; j < n; ++j) gx[j] = T(0);
        for (int o = 0; o < out; ++o) {
            const T wv = W.at(o, i);
            const T* gz = dZ.row(o);
            for (int j = 0; j < n; ++j) gx[j] += wv * gz[j];
        }
    }
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out; ++o) {
        const T* gz = dZ.row(o);
        db[o] = lane_sum(gz, n);
        for (int i = 0; i < in; ++i) dW.at(o, i) = lane_dot(gz, X.row(i), n);
    }
}

// ---------------------------------------------------------------------------
// Tap gather/scatter between Tensors and matrices.
// Spatial taps use replicate (edge) padding; with the right/bottom-facing
// kernels this only ever clamps at the right and bottom borders.

template <class T>
void gather_taps(const Tensor<T>& t, const std::vector<Tap>& taps, Mat<T>& X) {
    const int n = t.n, h = t.h, w = t.w;
    const int cols = n * h * w;
    if (X.rows != static_cast<int>(taps.size()) || X.cols != cols)
        X = Mat<T>(static_cast<int>(taps.size()), cols);
    for (size_t ti = 0; ti < taps.size(); ++ti) {
        const Tap tap = taps[ti];
        T* dst = X.row(static_cast<int>(ti));
        size_t j = 0;
        for (int ni = 0; ni < n; ++ni)
            for (int y = 0; y < h; ++y) {
                const int sy = std::min(y + tap.dy, h - 1);
                for (int x = 0; x < w; ++x, ++j) {
                    const int sx = std::min(x + tap.dx, w - 1);
                    dst[j] = t.at(ni, tap.channel, sy, sx);
                }
            }
    }
}

// Accumulates tap-matrix gradients back into the tensor gradient. Replicate
// padding routes border contributions onto the clamped source pixel.
template <class T>
void scatter_tap_grads(const Mat<T>& dX, const std::vector<Tap>& taps, Tensor<T>& t) {
    const int n = t.n, h = t.h, w = t.w;
    t.ensure_grad();
    for (size_t ti = 0; ti < taps.size(); ++ti) {
        const Tap tap = taps[ti];
        const T* src = dX.row(static_cast<int>(ti));
        size_t j = 0;
        for (int ni = 0; ni < n; ++ni)
            for (int y = 0; y < h; ++y) {
                const int sy = std::min(y + tap.dy, h - 1);
                for (int x = 0; x < w; ++x, ++j) {
                    const int sx = std::min(x + tap.dx, w - 1);
                    t.grad[t.idx(ni, tap.channel, sy, sx)] += src[j];
                }
            }
    }
}

// ---------------------------------------------------------------------------
// Layer: spec + parameters.

template <class T>
struct Layer {
    LayerSpec spec;
    Mat<T> W;           // out_channels x |taps|
    std::vector<T> b;   // out_channels

    Layer() = default;
    Layer(LayerSpec s) : spec(std::move(s)) {
        spec.validate();
        W = Mat<T>(spec.out_channels, static_cast<int>(spec.taps.size()));
        b.assign(spec.out_channels, T(0));
    }
};

// Forward cache; backward refuses to run without one.
template <class T>
struct LayerCache {
    Mat<T> X;  // gathered inputs
    Mat<T> Z;  // pre-activations
    bool valid = false;
};

template <class T>
void check_layer_input(const Layer<T>& layer, const Tensor<T>& input) {
    for (const Tap& t : layer.spec.taps)
        if (t.channel < 0 || t.channel >= input.c)
            throw ConfigError("layer taps reference channel " + std::to_string(t.channel) +
                              " but input has " + std::to_string(input.c) + " channels");
    if (input.h <= layer.spec.max_dy() || input.w <= layer.spec.max_dx())
        throw ConfigError("layer tap extent exceeds input spatial dims");
    if (layer.W.cols != static_cast<int>(layer.spec.taps.size()))
        throw ConfigError("layer weight matrix does not match tap count");
}

template <class T>
Tensor<T> layer_forward(const Layer<T>& layer, const Tensor<T>& input, LayerCache<T>& cache) {
    check_layer_input(layer, input);
    gather_taps(input, layer.spec.taps, cache.X);
    const int cols = cache.X.cols;
    cache.Z = Mat<T>(layer.spec.out_channels, cols);
    Mat<T> Y(layer.spec.out_channels, cols);
    dense_forward(layer.W, layer.b, cache.X, cache.Z, Y, layer.spec.act);
    cache.valid = true;
    Tensor<T> out(input.n, layer.spec.out_channels, input.h, input.w);
    // matrix rows are already (n,h,w)-ordered planes
    for (int o = 0; o < layer.spec.out_channels; ++o) {
        const T* src = Y.row(o);
        size_t j = 0;
        for (int ni = 0; ni < input.n; ++ni) {
            T* dst = out.v.data() + out.idx(ni, o, 0, 0);
            for (size_t k = 0; k < out.plane(); ++k, ++j) dst[k] = src[j];
        }
    }
    return out;
}

template <class T>
struct LayerGrads {
    Mat<T> dW;
    std::vector<T> db;
};

// Gradients of loss w.r.t. layer input (written into input.grad), weights and
// bias, given the gradient w.r.t. the layer output.
template <class T>
LayerGrads<T> layer_backward(const Layer<T>& layer, const LayerCache<T>& cache,
                             Tensor<T>& input, const Tensor<T>& out_grad_t) {
    if (!cache.valid) throw ConfigError("layer backward called without a forward cache");
    const int cols = cache.X.cols;
    Mat<T> dY(layer.spec.out_channels, cols);
    for (int o = 0; o < layer.spec.out_channels; ++o) {
        T* dst = dY.row(o);
        size_t j = 0;
        for (int ni = 0; ni < out_grad_t.n; ++ni) {
            const T* src = out_grad_t.v.data() + out_grad_t.idx(ni, o, 0, 0);
            for (size_t k = 0; k < out_grad_t.plane(); ++k, ++j) dst[j] = src[k];
        }
    }
    Mat<T> dX(cache.X.rows, cols), dZ(layer.spec.out_channels, cols);
    LayerGrads<T> g;
    g.dW = Mat<T>(layer.W.rows, layer.W.cols);
    g.db.assign(layer.b.size(), T(0));
    dense_backward(layer.W, cache.X, cache.Z, dY, layer.spec.act, dX, g.dW, g.db, dZ);
    scatter_tap_grads(dX, layer.spec.taps, input);
    return g;
}

// ---------------------------------------------------------------------------
// Mlp: the cascade that makes up one LUT-convertible block. Layer 0 carries
// the spatial/channel taps; the rest are 1x1 over the previous width.

template <class T>
struct Mlp {
    std::vector<Layer<T>> layers;

    int in_arity() const { return layers.empty() ? 0 : static_cast<int>(layers[0].spec.taps.size()); }
    int out_count() const { return layers.empty() ? 0 : layers.back().spec.out_channels; }

    // Forward on a gathered input matrix (arity x n). Caches for backward.
    void forward(const Mat<T>& X0, std::vector<LayerCache<T>>& caches, Mat<T>& out) const {
        caches.resize(layers.size());
        for (size_t li = 0; li < layers.size(); ++li) {
            const Layer<T>& L = layers[li];
            LayerCache<T>& c = caches[li];
            if (li == 0) c.X = X0;  // later caches receive their input below
            const int n = c.X.cols;
            c.Z = Mat<T>(L.spec.out_channels, n);
            Mat<T> y(L.spec.out_channels, n);
            dense_forward(L.W, L.b, c.X, c.Z, y, L.spec.act);
            c.valid = true;
            if (li + 1 == layers.size())
                out = std::move(y);
            else
                caches[li + 1].X = std::move(y);
        }
    }

    // Plain forward without caches (inference / baking).
    void infer(const Mat<T>& X0, Mat<T>& out) const {
        const int n = X0.cols;
        Mat<T> cur = X0, z;
        for (const Layer<T>& L : layers) {
            z = Mat<T>(L.spec.out_channels, n);
            Mat<T> y(L.spec.out_channels, n);
            dense_forward(L.W, L.b, cur, z, y, L.spec.act);
            cur = std::move(y);
        }
        out = std::move(cur);
    }

    // Serial reference of infer, kept for the parallel-equivalence tests.
    void infer_serial(const Mat<T>& X0, Mat<T>& out) const {
        const int n = X0.cols;
        Mat<T> cur = X0, z;
        for (const Layer<T>& L : layers) {
            z = Mat<T>(L.spec.out_channels, n);
            Mat<T> y(L.spec.out_channels, n);
            dense_forward_serial(L.W, L.b, cur, z, y, L.spec.act);
            cur = std::move(y);
        }
        out = std::move(cur);
    }

    // Backward from dOut (out x n); returns gradient w.r.t. X0 and fills
    // per-layer parameter grads.
    void backward(const std::vector<LayerCache<T>>& caches, const Mat<T>& dOut,
                  std::vector<LayerGrads<T>>& grads, Mat<T>& dX0) const {
        grads.resize(layers.size());
        Mat<T> dy = dOut;
        for (int li = static_cast<int>(layers.size()) - 1; li >= 0; --li) {
            const Layer<T>& L = layers[static_cast<size_t>(li)];
            const LayerCache<T>& c = caches[static_cast<size_t>(li)];
            if (!c.valid) throw ConfigError("mlp backward without forward cache");
            const int n = c.X.cols;
            Mat<T> dX(c.X.rows, n), dZ(L.spec.out_channels, n);
            LayerGrads<T>& g = grads[static_cast<size_t>(li)];
            g.dW = Mat<T>(L.W.rows, L.W.cols);
            g.db.assign(L.b.size(), T(0));
            dense_backward(L.W, c.X, c.Z, dy, L.spec.act, dX, g.dW, g.db, dZ);
            dy = std::move(dX);
        }
        dX0 = std::move(dy);
    }
};

// ---------------------------------------------------------------------------
// MSE loss. Returns mean of squared differences; if pred has a grad buffer
// attached the gradient 2(pred-target)/numel is accumulated into it.

template <class T>
double mse_loss(Tensor<T>& pred, const Tensor<T>& target, bool with_grad = false) {
    if (!pred.same_shape(target)) throw ConfigError("mse: shape mismatch");
    const size_t n = pred.numel();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pred.v[i]) - static_cast<double>(target.v[i]);
        acc += d * d;
    }
    if (with_grad) {
        pred.ensure_grad();
        const T scale = T(2) / static_cast<T>(n);
        for (size_t i = 0; i < n; ++i)
            pred.grad[i] += scale * (pred.v[i] - target.v[i]);
    }
    return acc / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Cosine-annealed learning rate: lr(t) = lr_min + (lr_max-lr_min)/2 * (1+cos(pi t/T)).

inline double cosine_lr(double lr_max, double lr_min, int64_t t, int64_t total) {
    const double x = 3.14159265358979323846 * static_cast<double>(t) / static_cast<double>(total);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(x));
}

// ---------------------------------------------------------------------------
// Adam with bias correction. One state per parameter vector. Steps with a
// non-finite gradient are skipped and counted instead of applied.

template <class T>
struct AdamState {
    std::vector<T> m, v;
    void init(size_t n) {
        m.assign(n, T(0));
        v.assign(n, T(0));
    }
};

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class T>
void adam_step(T* params, const T* grads, size_t n, AdamState<T>& st, int64_t t, double lr,
               const AdamParams& ap = {}) {
    const double c1 = 1.0 - std::pow(ap.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(ap.beta2, static_cast<double>(t));
    for (size_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(grads[i]);
        const double m = ap.beta1 * static_cast<double>(st.m[i]) + (1.0 - ap.beta1) * g;
        const double v = ap.beta2 * static_cast<double>(st.v[i]) + (1.0 - ap.beta2) * g * g;
        st.m[i] = static_cast<T>(m);
        st.v[i] = static_cast<T>(v);
        const double mhat = m / c1;
        const double vhat = v / c2;
        params[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + ap.eps));
    }
}

template <class T>
bool all_finite(const T* p, size_t n) {
    for (size_t i = 0; i < n; ++i)
        if (!std::isfinite(static_cast<double>(p[i]))) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Parameter init. Kaiming-style for the ReLU cascade; the final layer is
// scaled down so blocks start close to a mild function of their inputs.

template <class T>
void init_mlp(Mlp<T>& net, Rng& rng, double final_scale, double final_bias) {
    for (size_t li = 0; li < net.layers.size(); ++li) {
        Layer<T>& L = net.layers[li];
        const int fan_in = L.W.cols;
        const bool last = li + 1 == net.layers.size();
        const double std0 = std::sqrt(2.0 / static_cast<double>(fan_in));
        const double scale = last ? final_scale * std0 : std0;
        for (auto& w : L.W.v) w = static_cast<T>(rng.gaussian() * scale);
        std::fill(L.b.begin(), L.b.end(), static_cast<T>(last ? final_bias : 0.0));
    }
}

}  // namespace lutdn
