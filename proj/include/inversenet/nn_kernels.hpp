#ifndef INVERSENET_NN_KERNELS_HPP
#define INVERSENET_NN_KERNELS_HPP

#include <algorithm>

#include "inversenet/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

// Low-level numeric kernels for the network graph: zero-padded SAME
// convolution (stride s, output = ceil(in/s)) with its two adjoints, and the
// pixel shuffle reorderings. Transposed convolution is expressed through the
// convolution adjoints (see graph.hpp), so these three routines carry all
// conv-like layers.
//
// Accumulation order for every output element is a fixed serial loop, so
// results are bitwise identical with and without OpenMP.

namespace inversenet {
namespace nnk {

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

struct SamePad {
    std::int64_t out_h, out_w;  // ceil(in/stride)
    std::int64_t pad_top, pad_left;
};

// Zero-padded SAME: total padding max((out-1)*s + k - in, 0), smaller half on
// the top/left.
inline SamePad same_pad(std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
                        std::int64_t stride) {
    SamePad p;
    p.out_h = ceil_div(h, stride);
    p.out_w = ceil_div(w, stride);
    const std::int64_t tot_h = std::max<std::int64_t>((p.out_h - 1) * stride + kh - h, 0);
    const std::int64_t tot_w = std::max<std::int64_t>((p.out_w - 1) * stride + kw - w, 0);
    p.pad_top = tot_h / 2;
    p.pad_left = tot_w / 2;
    return p;
}

// y[n,i,j,co] = bias[co] + sum_{a,b,ci} x[n, i*s+a-pt, j*s+b-pl, ci] * k[a,b,ci,co]
// kernel laid out as (kh, kw, cin, cout), x as (n,h,w,cin).
inline Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const double* bias,
                             std::int64_t stride) {
    const Shape xs = x.shape();
    const Shape ks = kernel.shape();  // (kh, kw, cin, cout)
    const std::int64_t kh = ks.n, kw = ks.h, cin = ks.w, cout = ks.c;
    if (xs.c != cin)
        throw Error("conv2d_forward: input channels " + std::to_string(xs.c) +
                    " != kernel cin " + std::to_string(cin));
    const SamePad p = same_pad(xs.h, xs.w, kh, kw, stride);
    Tensor y(Shape{xs.n, p.out_h, p.out_w, cout});

    const double* xd = x.data();
    const double* kd = kernel.data();
    double* yd = y.data();
    const std::int64_t x_row = xs.w * cin;
    const std::int64_t y_row = p.out_w * cout;

#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (std::int64_t n = 0; n < xs.n; ++n) {
        for (std::int64_t i = 0; i < p.out_h; ++i) {
            const double* xn = xd + n * xs.h * x_row;
            double* yrow = yd + (n * p.out_h + i) * y_row;
            for (std::int64_t j = 0; j < p.out_w; ++j) {
                double* acc = yrow + j * cout;
                if (bias) {
                    for (std::int64_t co = 0; co < cout; ++co) acc[co] = bias[co];
                } else {
                    for (std::int64_t co = 0; co < cout; ++co) acc[co] = 0.0;
                }
                for (std::int64_t a = 0; a < kh; ++a) {
                    const std::int64_t ih = i * stride + a - p.pad_top;
                    if (ih < 0 || ih >= xs.h) continue;
                    for (std::int64_t b = 0; b < kw; ++b) {
                        const std::int64_t iw = j * stride + b - p.pad_left;
                        if (iw < 0 || iw >= xs.w) continue;
                        const double* xp = xn + ih * x_row + iw * cin;
                        const double* kp = kd + (a * kw + b) * cin * cout;
                        for (std::int64_t ci = 0; ci < cin; ++ci) {
                            const double xv = xp[ci];
                            const double* kc = kp + ci * cout;
                            for (std::int64_t co = 0; co < cout; ++co) acc[co] += xv * kc[co];
                        }
                    }
                }
            }
        }
    }
    return y;
}

// Gradient w.r.t. x: gather form, one serial accumulation per input element.
inline Tensor conv2d_input_grad(const Tensor& dy, const Tensor& kernel, const Shape& x_shape,
                                std::int64_t stride) {
    const Shape ks = kernel.shape();
    const std::int64_t kh = ks.n, kw = ks.h, cin = ks.w, cout = ks.c;
    const SamePad p = same_pad(x_shape.h, x_shape.w, kh, kw, stride);
    dy.ensure_shape(Shape{x_shape.n, p.out_h, p.out_w, cout}, "conv2d_input_grad");
    Tensor dx(x_shape);

    const double* gd = dy.data();
    const double* kd = kernel.data();
    double* xd = dx.data();
    const std::int64_t g_row = p.out_w * cout;
    const std::int64_t x_row = x_shape.w * cin;

#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (std::int64_t n = 0; n < x_shape.n; ++n) {
        for (std::int64_t ph = 0; ph < x_shape.h; ++ph) {
            const double* gn = gd + n * p.out_h * g_row;
            double* xrow = xd + (n * x_shape.h + ph) * x_row;
            // output rows i with i*stride + a == ph + pad_top for some a in [0,kh)
            const std::int64_t sh = ph + p.pad_top;
            const std::int64_t i_lo = std::max<std::int64_t>(0, ceil_div(sh - kh + 1, stride));
            const std::int64_t i_hi = std::min(p.out_h - 1, sh / stride);
            for (std::int64_t pw = 0; pw < x_shape.w; ++pw) {
                double* acc = xrow + pw * cin;
                const std::int64_t sw = pw + p.pad_left;
                const std::int64_t j_lo = std::max<std::int64_t>(0, ceil_div(sw - kw + 1, stride));
                const std::int64_t j_hi = std::min(p.out_w - 1, sw / stride);
                for (std::int64_t i = i_lo; i <= i_hi; ++i) {
                    const std::int64_t a = sh - i * stride;
                    for (std::int64_t j = j_lo; j <= j_hi; ++j) {
                        const std::int64_t b = sw - j * stride;
                        const double* gp = gn + i * g_row + j * cout;
                        const double* kp = kd + (a * kw + b) * cin * cout;
                        for (std::int64_t ci = 0; ci < cin; ++ci) {
                            const double* kc = kp + ci * cout;
                            double s = 0.0;
                            for (std::int64_t co = 0; co < cout; ++co) s += kc[co] * gp[co];
                            acc[ci] += s;
                        }
                    }
                }
            }
        }
    }
    return dx;
}

// Gradient w.r.t. kernel; one serial accumulation per kernel tap.
inline Tensor conv2d_kernel_grad(const Tensor& x, const Tensor& dy, std::int64_t kh,
                                 std::int64_t kw, std::int64_t stride) {
    const Shape xs = x.shape();
    const Shape gs = dy.shape();
    const std::int64_t cin = xs.c, cout = gs.c;
    const SamePad p = same_pad(xs.h, xs.w, kh, kw, stride);
    dy.ensure_shape(Shape{xs.n, p.out_h, p.out_w, cout}, "conv2d_kernel_grad");
    Tensor dk(Shape{kh, kw, cin, cout});

    const double* xd = x.data();
    const double* gd = dy.data();
    double* kd = dk.data();
    const std::int64_t x_row = xs.w * cin;
    const std::int64_t g_row = p.out_w * cout;

#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (std::int64_t a = 0; a < kh; ++a) {
        for (std::int64_t b = 0; b < kw; ++b) {
            double* kp = kd + (a * kw + b) * cin * cout;
            for (std::int64_t n = 0; n < xs.n; ++n) {
                const double* xn = xd + n * xs.h * x_row;
                const double* gn = gd + n * p.out_h * g_row;
                for (std::int64_t i = 0; i < p.out_h; ++i) {
                    const std::int64_t ih = i * stride + a - p.pad_top;
                    if (ih < 0 || ih >= xs.h) continue;
                    for (std::int64_t j = 0; j < p.out_w; ++j) {
                        const std::int64_t iw = j * stride + b - p.pad_left;
                        if (iw < 0 || iw >= xs.w) continue;
                        const double* xp = xn + ih * x_row + iw * cin;
                        const double* gp = gn + i * g_row + j * cout;
                        for (std::int64_t ci = 0; ci < cin; ++ci) {
                            const double xv = xp[ci];
                            double* kc = kp + ci * cout;
                            for (std::int64_t co = 0; co < cout; ++co) kc[co] += xv * gp[co];
                        }
                    }
                }
            }
        }
    }
    return dk;
}

// Sum of dy over (n, h, w) per output channel.
inline std::vector<double> bias_grad(const Tensor& dy) {
    const Shape s = dy.shape();
    std::vector<double> db(static_cast<std::size_t>(s.c), 0.0);
    const double* gd = dy.data();
    const std::int64_t outer = s.n * s.h * s.w;
    for (std::int64_t i = 0; i < outer; ++i) {
        const double* gp = gd + i * s.c;
        for (std::int64_t c = 0; c < s.c; ++c) db[static_cast<std::size_t>(c)] += gp[c];
    }
    return db;
}

// Swap the last two kernel axes: (kh,kw,A,B) -> (kh,kw,B,A). Used to express
// transposed convolution through the conv primitives.
inline Tensor kernel_transpose(const Tensor& k) {
    const Shape s = k.shape();
    Tensor out(Shape{s.n, s.h, s.c, s.w});
    for (std::int64_t a = 0; a < s.n; ++a)
        for (std::int64_t b = 0; b < s.h; ++b)
            for (std::int64_t p = 0; p < s.w; ++p)
                for (std::int64_t q = 0; q < s.c; ++q)
                    out.at(a, b, q, p) = k.at(a, b, p, q);
    return out;
}

// (n,h,w,c) -> (n,h/r,w/r,c*r^2); out channel index = c*r^2 + di*r + dj.
inline Tensor pixel_unshuffle(const Tensor& x, std::int64_t r) {
    const Shape s = x.shape();
    if (r <= 0) throw Error("pixel_unshuffle: factor must be positive");
    if (s.h % r != 0 || s.w % r != 0)
        throw Error("pixel_unshuffle: spatial dims " + s.str() + " not divisible by r=" +
                    std::to_string(r));
    Tensor y(Shape{s.n, s.h / r, s.w / r, s.c * r * r});
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t i = 0; i < s.h / r; ++i)
            for (std::int64_t j = 0; j < s.w / r; ++j)
                for (std::int64_t c = 0; c < s.c; ++c)
                    for (std::int64_t di = 0; di < r; ++di)
                        for (std::int64_t dj = 0; dj < r; ++dj)
                            y.at(n, i, j, c * r * r + di * r + dj) =
                                x.at(n, i * r + di, j * r + dj, c);
    return y;
}

// Exact inverse of pixel_unshuffle.
inline Tensor pixel_shuffle(const Tensor& x, std::int64_t r) {
    const Shape s = x.shape();
    if (r <= 0) throw Error("pixel_shuffle: factor must be positive");
    if (s.c % (r * r) != 0)
        throw Error("pixel_shuffle: channels " + std::to_string(s.c) + " not divisible by r^2=" +
                    std::to_string(r * r));
    Tensor y(Shape{s.n, s.h * r, s.w * r, s.c / (r * r)});
    const std::int64_t cout = s.c / (r * r);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t i = 0; i < s.h; ++i)
            for (std::int64_t j = 0; j < s.w; ++j)
                for (std::int64_t c = 0; c < cout; ++c)
                    for (std::int64_t di = 0; di < r; ++di)
                        for (std::int64_t dj = 0; dj < r; ++dj)
                            y.at(n, i * r + di, j * r + dj, c) =
                                x.at(n, i, j, c * r * r + di * r + dj);
    return y;
}

}  // namespace nnk
}  // namespace inversenet

#endif  // INVERSENET_NN_KERNELS_HPP
