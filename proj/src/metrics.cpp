#include "lutdn/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "lutdn/errors.hpp"

namespace lutdn {

double cpsnr(const ImageU8& a, const ImageU8& b) {
    if (!a.same_shape(b)) throw ConfigError("cpsnr: image shapes differ");
    if (a.data.empty()) throw ConfigError("cpsnr: empty images");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    if (acc == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = acc / static_cast<double>(a.data.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

namespace {

std::vector<double> gaussian_window_11() {
    // 11x11, sigma 1.5, normalized to sum 1.
    std::vector<double> w(11 * 11);
    double sum = 0.0;
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 11; ++x) {
            const double dy = y - 5, dx = x - 5;
            const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
            w[y * 11 + x] = v;
            sum += v;
        }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace

double ssim(const ImageU8& a, const ImageU8& b) {
    if (!a.same_shape(b)) throw ConfigError("ssim: image shapes differ");
    if (a.width < 11 || a.height < 11)
        throw ConfigError("ssim: images smaller than the 11x11 window");
    static const std::vector<double> win = gaussian_window_11();
    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);

    double chan_sum = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        double map_sum = 0.0;
        int64_t windows = 0;
        for (int y = 0; y + 11 <= a.height; ++y)
            for (int x = 0; x + 11 <= a.width; ++x) {
                double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
                for (int wy = 0; wy < 11; ++wy)
                    for (int wx = 0; wx < 11; ++wx) {
                        const double wv = win[wy * 11 + wx];
                        const double pa = a.at(c, y + wy, x + wx);
                        const double pb = b.at(c, y + wy, x + wx);
                        mu_a += wv * pa;
                        mu_b += wv * pb;
                        aa += wv * pa * pa;
                        bb += wv * pb * pb;
                        ab += wv * pa * pb;
                    }
                const double var_a = aa - mu_a * mu_a;
                const double var_b = bb - mu_b * mu_b;
                const double cov = ab - mu_a * mu_b;
                const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                map_sum += num / den;
                ++windows;
            }
        chan_sum += map_sum / static_cast<double>(windows);
    }
    return chan_sum / static_cast<double>(a.channels);
}

}  // namespace lutdn
