#ifndef INVERSENET_RESIZE_HPP
#define INVERSENET_RESIZE_HPP

#include <cmath>

#include "inversenet/tensor.hpp"

namespace inversenet {

namespace detail {

// Catmull-Rom cubic (a = -0.5).
inline double cubic_weight(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

}  // namespace detail

// Channel-wise separable bicubic interpolation with half-pixel alignment and
// edge clamping. new size == old size reproduces the input exactly.
inline Tensor bicubic_resize(const Tensor& x, std::int64_t new_h, std::int64_t new_w) {
    const Shape s = x.shape();
    if (new_h < 1 || new_w < 1)
        throw Error("bicubic_resize: target dims must be positive");

    auto resample_axis = [](const Tensor& in, std::int64_t out_len, bool rows) {
        const Shape is = in.shape();
        const std::int64_t in_len = rows ? is.h : is.w;
        Shape os = is;
        (rows ? os.h : os.w) = out_len;
        Tensor out(os);
        const double scale = static_cast<double>(in_len) / static_cast<double>(out_len);
        for (std::int64_t o = 0; o < out_len; ++o) {
            const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
            const std::int64_t base = static_cast<std::int64_t>(std::floor(src));
            const double frac = src - static_cast<double>(base);
            double wgt[4];
            for (int t = 0; t < 4; ++t)
                wgt[t] = detail::cubic_weight(frac - static_cast<double>(t - 1));
            const double wsum = wgt[0] + wgt[1] + wgt[2] + wgt[3];
            for (int t = 0; t < 4; ++t) wgt[t] /= wsum;
            std::int64_t idx[4];
            for (int t = 0; t < 4; ++t) {
                std::int64_t p = base + t - 1;
                idx[t] = std::min(in_len - 1, std::max<std::int64_t>(0, p));
            }
            for (std::int64_t n = 0; n < os.n; ++n) {
                const std::int64_t other = rows ? os.w : os.h;
                for (std::int64_t q = 0; q < other; ++q) {
                    for (std::int64_t c = 0; c < os.c; ++c) {
                        double acc = 0.0;
                        for (int t = 0; t < 4; ++t) {
                            const double v = rows ? in.at(n, idx[t], q, c) : in.at(n, q, idx[t], c);
                            acc += wgt[t] * v;
                        }
                        if (rows)
                            out.at(n, o, q, c) = acc;
                        else
                            out.at(n, q, o, c) = acc;
                    }
                }
            }
        }
        return out;
    };

    Tensor tmp = (new_h == s.h) ? x : resample_axis(x, new_h, /*rows=*/true);
    return (new_w == s.w) ? tmp : resample_axis(tmp, new_w, /*rows=*/false);
}

}  // namespace inversenet

#endif  // INVERSENET_RESIZE_HPP
