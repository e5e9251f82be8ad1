#ifndef INVERSENET_KERNELS_HPP
#define INVERSENET_KERNELS_HPP

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "inversenet/rng.hpp"
#include "inversenet/tensor.hpp"

namespace inversenet {

// 2-D blur kernel, either one tap matrix shared by all image channels or one
// per channel. Odd extent so the center tap is well defined.
struct Kernel2D {
    std::int64_t kh = 0, kw = 0;
    std::int64_t channels = 1;  // 1 = shared across image channels
    bool normalized = false;
    std::vector<double> taps;  // channel-major, then row-major (kh, kw)

    double at(std::int64_t ch, std::int64_t a, std::int64_t b) const {
        return taps[static_cast<std::size_t>((ch * kh + a) * kw + b)];
    }
    double& at(std::int64_t ch, std::int64_t a, std::int64_t b) {
        return taps[static_cast<std::size_t>((ch * kh + a) * kw + b)];
    }

    // Tap matrix for image channel c under the shared/per-channel convention.
    std::int64_t channel_index(std::int64_t c) const { return channels == 1 ? 0 : c; }

    void validate() const {
        if (kh < 1 || kw < 1 || kh % 2 == 0 || kw % 2 == 0)
            throw Error("Kernel2D: extents must be odd and positive, got " +
                        std::to_string(kh) + "x" + std::to_string(kw));
        if (channels < 1) throw Error("Kernel2D: channel count must be positive");
        if (static_cast<std::int64_t>(taps.size()) != channels * kh * kw)
            throw Error("Kernel2D: tap count mismatch");
        for (double t : taps)
            if (!std::isfinite(t)) throw Error("Kernel2D: non-finite tap");
        if (normalized) {
            for (std::int64_t ch = 0; ch < channels; ++ch) {
                double s = 0.0;
                for (std::int64_t a = 0; a < kh; ++a)
                    for (std::int64_t b = 0; b < kw; ++b) s += at(ch, a, b);
                if (std::abs(s - 1.0) > 1e-12)
                    throw Error("Kernel2D: channel " + std::to_string(ch) +
                                " flagged normalized but sums to " + std::to_string(s));
            }
        }
    }

    static Kernel2D delta(std::int64_t size = 1) {
        Kernel2D k;
        k.kh = k.kw = size;
        k.channels = 1;
        k.taps.assign(static_cast<std::size_t>(size * size), 0.0);
        k.at(0, size / 2, size / 2) = 1.0;
        k.normalized = true;
        k.validate();
        return k;
    }
};

enum class KernelKind { Flat, LinearMotion, Gaussian };

inline KernelKind kernel_kind_from_string(const std::string& s) {
    if (s == "flat") return KernelKind::Flat;
    if (s == "linear_motion") return KernelKind::LinearMotion;
    if (s == "gaussian") return KernelKind::Gaussian;
    throw Error("unknown kernel kind '" + s + "'");
}

struct KernelParams {
    double sigma = 1.5;                 // gaussian
    double length = 1.0;                // linear_motion, in pixels
    std::optional<double> angle_deg;    // linear_motion; drawn from seed when absent
};

// flat: all taps 1/size^2. gaussian: isotropic, normalized. linear_motion: a
// line segment through the center rasterized with bilinear weights.
inline Kernel2D make_kernel(KernelKind kind, std::int64_t size, const KernelParams& params,
                            std::uint64_t seed) {
    if (size < 1 || size % 2 == 0)
        throw Error("make_kernel: size must be odd and positive, got " + std::to_string(size));
    Kernel2D k;
    k.kh = k.kw = size;
    k.channels = 1;
    k.taps.assign(static_cast<std::size_t>(size * size), 0.0);
    switch (kind) {
        case KernelKind::Flat: {
            const double v = 1.0 / static_cast<double>(size * size);
            for (double& t : k.taps) t = v;
            break;
        }
        case KernelKind::Gaussian: {
            if (!(params.sigma > 0.0)) throw Error("make_kernel: gaussian sigma must be > 0");
            const double c = static_cast<double>(size / 2);
            double sum = 0.0;
            for (std::int64_t a = 0; a < size; ++a) {
                for (std::int64_t b = 0; b < size; ++b) {
                    const double da = static_cast<double>(a) - c;
                    const double db = static_cast<double>(b) - c;
                    const double v =
                        std::exp(-(da * da + db * db) / (2.0 * params.sigma * params.sigma));
                    k.at(0, a, b) = v;
                    sum += v;
                }
            }
            for (double& t : k.taps) t /= sum;
            break;
        }
        case KernelKind::LinearMotion: {
            if (!(params.length >= 1.0))
                throw Error("make_kernel: motion length must be >= 1");
            if (params.length - 1.0 > static_cast<double>(size - 1))
                throw Error("make_kernel: motion length exceeds kernel size");
            double angle;
            if (params.angle_deg.has_value()) {
                angle = *params.angle_deg * 3.14159265358979323846 / 180.0;
            } else {
                Rng rng(mix_seed(seed, 0x4D4F54));  // independent of other streams
                angle = rng.uniform(0.0, 3.14159265358979323846);
            }
            const double c = static_cast<double>(size / 2);
            const double half = (params.length - 1.0) / 2.0;
            const int samples = std::max(1, static_cast<int>(std::ceil(params.length * 8)));
            double sum = 0.0;
            for (int t = 0; t < samples; ++t) {
                const double u =
                    samples == 1 ? 0.0
                                 : -half + 2.0 * half * static_cast<double>(t) /
                                       static_cast<double>(samples - 1);
                const double pa = c + u * std::sin(angle);
                const double pb = c + u * std::cos(angle);
                const std::int64_t a0 = static_cast<std::int64_t>(std::floor(pa));
                const std::int64_t b0 = static_cast<std::int64_t>(std::floor(pb));
                const double fa = pa - static_cast<double>(a0);
                const double fb = pb - static_cast<double>(b0);
                const double w[2][2] = {{(1 - fa) * (1 - fb), (1 - fa) * fb},
                                        {fa * (1 - fb), fa * fb}};
                for (int da = 0; da < 2; ++da) {
                    for (int db = 0; db < 2; ++db) {
                        const std::int64_t a = a0 + da, b = b0 + db;
                        if (a < 0 || a >= size || b < 0 || b >= size) continue;
                        k.at(0, a, b) += w[da][db];
                        sum += w[da][db];
                    }
                }
            }
            for (double& t : k.taps) t /= sum;
            break;
        }
    }
    k.normalized = true;
    k.validate();
    return k;
}

// Per-channel kernel from single-channel pieces.
inline Kernel2D stack_kernels(const std::vector<Kernel2D>& parts) {
    if (parts.empty()) throw Error("stack_kernels: empty list");
    Kernel2D out = parts[0];
    out.channels = static_cast<std::int64_t>(parts.size());
    out.taps.clear();
    for (const Kernel2D& p : parts) {
        if (p.kh != out.kh || p.kw != out.kw || p.channels != 1)
            throw Error("stack_kernels: parts must be single-channel with equal extents");
        out.normalized = out.normalized && p.normalized;
        out.taps.insert(out.taps.end(), p.taps.begin(), p.taps.end());
    }
    out.validate();
    return out;
}

// Plain-text serialization: header "kernel kh kw channels normalized", then
// channels*kh rows of kw space-separated decimals.
inline void save_kernel(const std::string& path, const Kernel2D& k) {
    k.validate();
    std::ofstream f(path);
    if (!f) throw Error("save_kernel: cannot open '" + path + "'");
    f << "kernel " << k.kh << " " << k.kw << " " << k.channels << " " << (k.normalized ? 1 : 0)
      << "\n";
    f.precision(17);
    for (std::int64_t ch = 0; ch < k.channels; ++ch) {
        for (std::int64_t a = 0; a < k.kh; ++a) {
            for (std::int64_t b = 0; b < k.kw; ++b) {
                if (b) f << " ";
                f << k.at(ch, a, b);
            }
            f << "\n";
        }
    }
    if (!f) throw Error("save_kernel: write failed for '" + path + "'");
}

inline Kernel2D load_kernel(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("load_kernel: cannot open '" + path + "'");
    std::string tag;
    Kernel2D k;
    int normalized = 0;
    f >> tag >> k.kh >> k.kw >> k.channels >> normalized;
    if (!f || tag != "kernel")
        throw Error("load_kernel: '" + path + "' is not a kernel file");
    k.normalized = normalized != 0;
    k.taps.assign(static_cast<std::size_t>(k.channels * k.kh * k.kw), 0.0);
    for (double& t : k.taps)
        if (!(f >> t)) throw Error("load_kernel: truncated kernel file '" + path + "'");
    k.validate();
    return k;
}

}  // namespace inversenet

#endif  // INVERSENET_KERNELS_HPP
