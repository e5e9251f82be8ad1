#ifndef INVERSENET_METRICS_HPP
#define INVERSENET_METRICS_HPP

#include "inversenet/tensor.hpp"

// PSNR and SSIM on [0,1]-range images.

namespace inversenet {

struct PsnrResult {
    double db = 0.0;
    bool exact_match = false;  // MSE was exactly zero; db capped at 99
};

constexpr double kPsnrCap = 99.0;

inline PsnrResult psnr(const Tensor& a, const Tensor& b, double peak = 1.0) {
    if (a.shape() != b.shape())
        throw Error("psnr: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    const double m = mse(a, b);
    if (m == 0.0) return {kPsnrCap, true};
    return {10.0 * std::log10(peak * peak / m), false};
}

struct SSIMConfig {
    std::int64_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    void validate() const {
        if (window < 1 || window % 2 == 0)
            throw Error("SSIMConfig: window must be odd and positive");
        if (!(sigma > 0.0) || !(k1 > 0.0) || !(k2 > 0.0) || !(dynamic_range > 0.0))
            throw Error("SSIMConfig: constants must be positive");
    }
};

// Mean local SSIM over fully-interior window positions (Gaussian-weighted
// luminance-contrast-structure product), averaged over batch and channels.
inline double ssim(const Tensor& a, const Tensor& b, const SSIMConfig& cfg = {}) {
    cfg.validate();
    if (a.shape() != b.shape())
        throw Error("ssim: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    const Shape s = a.shape();
    if (s.h < cfg.window || s.w < cfg.window)
        throw Error("ssim: image " + s.str() + " smaller than the " +
                    std::to_string(cfg.window) + "x" + std::to_string(cfg.window) + " window");

    const std::int64_t W = cfg.window;
    const std::int64_t half = W / 2;
    std::vector<double> wgt(static_cast<std::size_t>(W * W));
    double wsum = 0.0;
    for (std::int64_t i = 0; i < W; ++i)
        for (std::int64_t j = 0; j < W; ++j) {
            const double di = static_cast<double>(i - half), dj = static_cast<double>(j - half);
            const double v = std::exp(-(di * di + dj * dj) / (2.0 * cfg.sigma * cfg.sigma));
            wgt[static_cast<std::size_t>(i * W + j)] = v;
            wsum += v;
        }
    for (double& v : wgt) v /= wsum;

    const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);

    double total = 0.0;
    std::int64_t count = 0;
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < s.c; ++c) {
            for (std::int64_t i = half; i + half < s.h; ++i) {
                for (std::int64_t j = half; j + half < s.w; ++j) {
                    double mu_a = 0.0, mu_b = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
                    for (std::int64_t wi = 0; wi < W; ++wi) {
                        for (std::int64_t wj = 0; wj < W; ++wj) {
                            const double w = wgt[static_cast<std::size_t>(wi * W + wj)];
                            const double va = a.at(n, i + wi - half, j + wj - half, c);
                            const double vb = b.at(n, i + wi - half, j + wj - half, c);
                            mu_a += w * va;
                            mu_b += w * vb;
                            saa += w * va * va;
                            sbb += w * vb * vb;
                            sab += w * va * vb;
                        }
                    }
                    const double var_a = saa - mu_a * mu_a;
                    const double var_b = sbb - mu_b * mu_b;
                    const double cov = sab - mu_a * mu_b;
                    const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                    const double den =
                        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                    total += num / den;
                    ++count;
                }
            }
        }
    }
    return total / static_cast<double>(count);
}

// [-1,1] network range <-> [0,1] metric/file range.
inline Tensor to_unit_range(const Tensor& x) {
    Tensor y(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i)
        y[i] = std::min(1.0, std::max(0.0, (x[i] + 1.0) * 0.5));
    return y;
}

inline Tensor to_signed_range(const Tensor& x) {
    Tensor y(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] * 2.0 - 1.0;
    return y;
}

}  // namespace inversenet

#endif  // INVERSENET_METRICS_HPP
