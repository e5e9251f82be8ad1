#include <catch2/catch_amalgamated.hpp>

#include "inversenet/operators.hpp"
#include "inversenet/resize.hpp"
#include "inversenet/rng.hpp"

#include <cstdio>
#include <thread>

using namespace inversenet;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Tensor t(s);
    Rng rng(seed);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Independent periodic-convolution oracle (plain nested loops, convolution
// orientation: output pixel = sum of kernel taps times shifted input).
Tensor periodic_conv_oracle(const Tensor& x, const Kernel2D& k) {
    const Shape s = x.shape();
    Tensor y(s);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t i = 0; i < s.h; ++i)
            for (std::int64_t j = 0; j < s.w; ++j)
                for (std::int64_t c = 0; c < s.c; ++c) {
                    double acc = 0.0;
                    for (std::int64_t a = 0; a < k.kh; ++a)
                        for (std::int64_t b = 0; b < k.kw; ++b) {
                            std::int64_t ih = (i - a + k.kh / 2) % s.h;
                            std::int64_t iw = (j - b + k.kw / 2) % s.w;
                            if (ih < 0) ih += s.h;
                            if (iw < 0) iw += s.w;
                            acc += k.at(k.channel_index(c), a, b) * x.at(n, ih, iw, c);
                        }
                    y.at(n, i, j, c) = acc;
                }
    return y;
}

void check_adjoint(const LinearOperator& op, std::uint64_t seed, int pairs = 100,
                   double tol = 1e-8) {
    for (int t = 0; t < pairs; ++t) {
        const Tensor x = random_tensor(op.input_shape(), seed + 2 * t);
        const Tensor y = random_tensor(op.output_shape(), seed + 2 * t + 1);
        const double lhs = op.forward(x).dot(y);
        const double rhs = x.dot(op.adjoint(y));
        const double denom = std::max({std::abs(lhs), std::abs(rhs), 1e-12});
        REQUIRE(std::abs(lhs - rhs) / denom < tol);
    }
}

void check_linearity(const LinearOperator& op, std::uint64_t seed, double tol = 1e-10) {
    const Tensor x1 = random_tensor(op.input_shape(), seed);
    const Tensor x2 = random_tensor(op.input_shape(), seed + 1);
    const double a = 0.37, b = -1.21;
    Tensor combo(op.input_shape());
    for (std::int64_t i = 0; i < combo.size(); ++i) combo[i] = a * x1[i] + b * x2[i];
    const Tensor lhs = op.forward(combo);
    const Tensor f1 = op.forward(x1);
    const Tensor f2 = op.forward(x2);
    for (std::int64_t i = 0; i < lhs.size(); ++i)
        REQUIRE(lhs[i] == Catch::Approx(a * f1[i] + b * f2[i]).margin(1e-10).epsilon(tol));
}

}  // namespace

TEST_CASE("make_kernel: flat 7x7 has taps 1/49 summing to 1") {
    const Kernel2D k = make_kernel(KernelKind::Flat, 7, {}, 0);
    REQUIRE(k.kh == 7);
    double sum = 0.0;
    for (double t : k.taps) {
        REQUIRE(t == Catch::Approx(1.0 / 49.0).epsilon(1e-15));
        sum += t;
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("make_kernel: linear motion of length 1 degenerates to a delta") {
    KernelParams p;
    p.length = 1.0;
    p.angle_deg = 30.0;
    const Kernel2D k = make_kernel(KernelKind::LinearMotion, 5, p, 0);
    for (std::int64_t a = 0; a < 5; ++a)
        for (std::int64_t b = 0; b < 5; ++b)
            REQUIRE(k.at(0, a, b) == Catch::Approx(a == 2 && b == 2 ? 1.0 : 0.0).margin(1e-12));
}

TEST_CASE("make_kernel: gaussian sigma 1.5 size 9 matches the closed form") {
    KernelParams p;
    p.sigma = 1.5;
    const Kernel2D k = make_kernel(KernelKind::Gaussian, 9, p, 0);
    double denom = 0.0;
    for (std::int64_t a = 0; a < 9; ++a)
        for (std::int64_t b = 0; b < 9; ++b) {
            const double da = static_cast<double>(a) - 4.0, db = static_cast<double>(b) - 4.0;
            denom += std::exp(-(da * da + db * db) / (2.0 * 1.5 * 1.5));
        }
    double sum = 0.0;
    for (std::int64_t a = 0; a < 9; ++a)
        for (std::int64_t b = 0; b < 9; ++b) {
            const double da = static_cast<double>(a) - 4.0, db = static_cast<double>(b) - 4.0;
            const double expect = std::exp(-(da * da + db * db) / (2.0 * 1.5 * 1.5)) / denom;
            REQUIRE(k.at(0, a, b) == Catch::Approx(expect).margin(1e-12));
            sum += k.at(0, a, b);
        }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("make_kernel rejects invalid sizes and params") {
    REQUIRE_THROWS_AS(make_kernel(KernelKind::Flat, 4, {}, 0), Error);
    REQUIRE_THROWS_AS(make_kernel(KernelKind::Flat, -1, {}, 0), Error);
    KernelParams bad;
    bad.sigma = 0.0;
    REQUIRE_THROWS_AS(make_kernel(KernelKind::Gaussian, 5, bad, 0), Error);
    KernelParams too_long;
    too_long.length = 9.0;
    REQUIRE_THROWS_AS(make_kernel(KernelKind::LinearMotion, 5, too_long, 0), Error);
}

TEST_CASE("make_kernel is deterministic given seed (seed-drawn motion angle)") {
    KernelParams p;
    p.length = 4.0;
    const Kernel2D a = make_kernel(KernelKind::LinearMotion, 9, p, 77);
    const Kernel2D b = make_kernel(KernelKind::LinearMotion, 9, p, 77);
    const Kernel2D c = make_kernel(KernelKind::LinearMotion, 9, p, 78);
    REQUIRE(a.taps == b.taps);
    REQUIRE(a.taps != c.taps);
}

TEST_CASE("kernel text serialization round trips") {
    KernelParams p;
    p.sigma = 0.8;
    Kernel2D k = stack_kernels({make_kernel(KernelKind::Gaussian, 3, p, 0),
                                make_kernel(KernelKind::Flat, 3, {}, 0),
                                make_kernel(KernelKind::LinearMotion, 3,
                                            [] {
                                                KernelParams q;
                                                q.length = 2.0;
                                                q.angle_deg = 45.0;
                                                return q;
                                            }(),
                                            0)});
    const std::string path = "kernel_roundtrip_test.txt";
    save_kernel(path, k);
    const Kernel2D r = load_kernel(path);
    REQUIRE(r.kh == k.kh);
    REQUIRE(r.kw == k.kw);
    REQUIRE(r.channels == 3);
    REQUIRE(r.normalized == k.normalized);
    for (std::size_t i = 0; i < k.taps.size(); ++i)
        REQUIRE(r.taps[i] == Catch::Approx(k.taps[i]).margin(1e-15));
    // header is the documented one-liner
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    REQUIRE(line.rfind("kernel 3 3 3 1", 0) == 0);
    f.close();
    std::remove(path.c_str());
    REQUIRE_THROWS_AS(load_kernel("does_not_exist.txt"), Error);
}

TEST_CASE("delta-kernel blur is the identity; adjoint too") {
    const Shape s{1, 8, 8, 3};
    MotionBlurPeriodic blur(Kernel2D::delta(3), s);
    const Tensor x = random_tensor(s, 5);
    const Tensor y = blur.forward(x);
    const Tensor z = blur.adjoint(x);
    for (std::int64_t i = 0; i < x.size(); ++i) {
        REQUIRE(y[i] == Catch::Approx(x[i]).margin(1e-15));
        REQUIRE(z[i] == Catch::Approx(x[i]).margin(1e-15));
    }
}

TEST_CASE("blur forward matches the dense-matrix oracle on random 8x8") {
    KernelParams p;
    p.length = 5.0;
    p.angle_deg = 25.0;
    const Kernel2D k = make_kernel(KernelKind::LinearMotion, 9, p, 3);
    const Shape s{1, 8, 8, 1};
    MotionBlurPeriodic blur(k, s);
    const DenseMatrix A = materialize_dense(blur);
    const Tensor x = random_tensor(s, 17);
    const Tensor y = blur.forward(x);
    std::vector<double> xv(x.data(), x.data() + x.size());
    const std::vector<double> yv = A.matvec(xv);
    for (std::int64_t i = 0; i < y.size(); ++i) {
        const double denom = std::max(std::abs(yv[static_cast<std::size_t>(i)]), 1e-12);
        REQUIRE(std::abs(y[i] - yv[static_cast<std::size_t>(i)]) / denom < 1e-10);
    }
    // and against the independent nested-loop convolution oracle
    const Tensor yo = periodic_conv_oracle(x, k);
    for (std::int64_t i = 0; i < y.size(); ++i)
        REQUIRE(y[i] == Catch::Approx(yo[i]).margin(1e-12));
}

TEST_CASE("spectral average: constant image and adjoint of ones") {
    const Shape s{1, 4, 4, 3};
    SpectralAverage avg(s);
    Tensor x(s, std::vector<double>(static_cast<std::size_t>(s.count()), 0.3));
    const Tensor y = avg.forward(x);
    REQUIRE(y.shape() == Shape{1, 4, 4, 1});
    for (std::int64_t i = 0; i < y.size(); ++i) REQUIRE(y[i] == Catch::Approx(0.3).margin(1e-15));

    Tensor ones(Shape{1, 4, 4, 1}, std::vector<double>(16, 1.0));
    const Tensor at = avg.adjoint(ones);
    for (std::int64_t i = 0; i < at.size(); ++i)
        REQUIRE(at[i] == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("adjoint identity holds for every operator variant") {
    const Shape img{1, 8, 8, 3};
    KernelParams mp;
    mp.length = 4.0;
    mp.angle_deg = 10.0;
    const Kernel2D motion = make_kernel(KernelKind::LinearMotion, 9, mp, 0);
    KernelParams gp;
    gp.sigma = 1.0;
    const Kernel2D gauss = make_kernel(KernelKind::Gaussian, 3, gp, 0);

    SECTION("motion blur") { check_adjoint(MotionBlurPeriodic(motion, img), 100); }
    SECTION("strided down d=2") { check_adjoint(StridedConvDown(gauss, 2, img), 200); }
    SECTION("strided down d=4") { check_adjoint(StridedConvDown(gauss, 4, img), 300); }
    SECTION("spectral average") { check_adjoint(SpectralAverage(img), 400); }
    SECTION("joint composite") {
        const Kernel2D per_channel = stack_kernels({
            make_kernel(KernelKind::Gaussian, 3, gp, 1),
            make_kernel(KernelKind::Flat, 3, {}, 2),
            make_kernel(KernelKind::LinearMotion, 3,
                        [] {
                            KernelParams q;
                            q.length = 2.0;
                            q.angle_deg = 60.0;
                            return q;
                        }(),
                        3),
        });
        auto blur = std::make_shared<MotionBlurPeriodic>(per_channel, img);
        auto avg = std::make_shared<SpectralAverage>(img);
        auto down = std::make_shared<StridedConvDown>(Kernel2D::delta(1), 2,
                                                      Shape{img.n, img.h, img.w, 1});
        CompositeOperator joint({blur, avg, down});
        REQUIRE(joint.output_shape() == Shape{1, 4, 4, 1});
        check_adjoint(joint, 500);
    }
}

TEST_CASE("operators are linear") {
    const Shape img{1, 8, 8, 3};
    KernelParams gp;
    gp.sigma = 1.3;
    const Kernel2D gauss = make_kernel(KernelKind::Gaussian, 5, gp, 0);
    check_linearity(MotionBlurPeriodic(gauss, img), 31);
    check_linearity(StridedConvDown(gauss, 2, img), 32);
    check_linearity(SpectralAverage(img), 33);
}

TEST_CASE("bccb transfer function: delta -> all-ones, flat 7x7 -> unit DC gain") {
    const auto lam_delta = bccb_transfer_function(Kernel2D::delta(3), 8, 8);
    for (const auto& v : lam_delta[0]) {
        REQUIRE(v.real() == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(v.imag() == Catch::Approx(0.0).margin(1e-12));
    }
    const auto lam_flat = bccb_transfer_function(make_kernel(KernelKind::Flat, 7, {}, 0), 16, 16);
    REQUIRE(lam_flat[0][0].real() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(lam_flat[0][0].imag() == Catch::Approx(0.0).margin(1e-12));

    REQUIRE_THROWS_AS(bccb_transfer_function(make_kernel(KernelKind::Flat, 9, {}, 0), 8, 8),
                      Error);
}

TEST_CASE("FFT blur path equals the spatial path on random 16x16") {
    KernelParams p;
    p.length = 6.0;
    p.angle_deg = 70.0;
    const Kernel2D k = make_kernel(KernelKind::LinearMotion, 9, p, 0);
    const Shape s{1, 16, 16, 3};
    MotionBlurPeriodic blur(k, s);
    const Tensor x = random_tensor(s, 9);
    const Tensor spatial = blur.forward(x);
    const Tensor fft = blur.forward_fft(x);
    for (std::int64_t i = 0; i < spatial.size(); ++i) {
        const double denom = std::max(std::abs(spatial[i]), 1e-12);
        REQUIRE(std::abs(spatial[i] - fft[i]) / denom < 1e-10);
    }
}

TEST_CASE("materialize_dense: identity operator gives the identity matrix") {
    MotionBlurPeriodic ident(Kernel2D::delta(1), Shape{1, 4, 4, 1});
    const DenseMatrix A = materialize_dense(ident);
    REQUIRE(A.rows == 16);
    REQUIRE(A.cols == 16);
    for (std::int64_t r = 0; r < 16; ++r)
        for (std::int64_t c = 0; c < 16; ++c)
            REQUIRE(A.at(r, c) == Catch::Approx(r == c ? 1.0 : 0.0).margin(1e-15));
}

TEST_CASE("4x4 periodic blur matrix is BCCB: every row is a 2-D circular shift of row 0") {
    KernelParams p;
    p.sigma = 0.9;
    const Kernel2D k = make_kernel(KernelKind::Gaussian, 3, p, 0);
    MotionBlurPeriodic blur(k, Shape{1, 4, 4, 1});
    const DenseMatrix A = materialize_dense(blur);
    const std::int64_t H = 4, W = 4;
    for (std::int64_t ri = 0; ri < H; ++ri)
        for (std::int64_t rj = 0; rj < W; ++rj)
            for (std::int64_t ci = 0; ci < H; ++ci)
                for (std::int64_t cj = 0; cj < W; ++cj) {
                    // row (ri,rj) col (ci,cj) == row 0 col ((ci-ri) mod H, (cj-rj) mod W)
                    const std::int64_t si = ((ci - ri) % H + H) % H;
                    const std::int64_t sj = ((cj - rj) % W + W) % W;
                    REQUIRE(A.at(ri * W + rj, ci * W + cj) ==
                            Catch::Approx(A.at(0, si * W + sj)).margin(1e-14));
                }
}

TEST_CASE("strided down d=2 on 4x4 matches the per-pixel hand expansion") {
    KernelParams p;
    p.sigma = 0.7;
    const Kernel2D k = make_kernel(KernelKind::Gaussian, 3, p, 0);
    StridedConvDown down(k, 2, Shape{1, 4, 4, 1});
    const DenseMatrix A = materialize_dense(down);
    REQUIRE(A.rows == 4);
    REQUIRE(A.cols == 16);
    // row (oi,oj), column (ii,ij): kernel tap at (oi*2 - ii, oj*2 - ij) + center,
    // wrapped periodically
    for (std::int64_t oi = 0; oi < 2; ++oi)
        for (std::int64_t oj = 0; oj < 2; ++oj)
            for (std::int64_t ii = 0; ii < 4; ++ii)
                for (std::int64_t ij = 0; ij < 4; ++ij) {
                    double expect = 0.0;
                    for (std::int64_t a = 0; a < 3; ++a)
                        for (std::int64_t b = 0; b < 3; ++b) {
                            std::int64_t src_i = ((oi * 2 - (a - 1)) % 4 + 4) % 4;
                            std::int64_t src_j = ((oj * 2 - (b - 1)) % 4 + 4) % 4;
                            if (src_i == ii && src_j == ij) expect += k.at(0, a, b);
                        }
                    REQUIRE(A.at(oi * 2 + oj, ii * 4 + ij) ==
                            Catch::Approx(expect).margin(1e-14));
                }
}

TEST_CASE("normalized blur preserves constants (DC gain 1)") {
    KernelParams p;
    p.length = 5.0;
    p.angle_deg = 33.0;
    const Kernel2D k = make_kernel(KernelKind::LinearMotion, 7, p, 0);
    MotionBlurPeriodic blur(k, Shape{1, 8, 8, 3});
    Tensor x(Shape{1, 8, 8, 3}, std::vector<double>(192, 0.42));
    const Tensor y = blur.forward(x);
    for (std::int64_t i = 0; i < y.size(); ++i)
        REQUIRE(y[i] == Catch::Approx(0.42).margin(1e-10));
}

TEST_CASE("joint composite shape chain: blur -> average -> down d=2") {
    const Shape img{1, 16, 16, 3};
    KernelParams gp;
    gp.sigma = 1.1;
    const Kernel2D per_channel =
        stack_kernels({make_kernel(KernelKind::Gaussian, 9, gp, 1),
                       make_kernel(KernelKind::Gaussian, 9, gp, 2),
                       make_kernel(KernelKind::Gaussian, 9, gp, 3)});
    auto blur = std::make_shared<MotionBlurPeriodic>(per_channel, img);
    auto avg = std::make_shared<SpectralAverage>(img);
    auto down = std::make_shared<StridedConvDown>(Kernel2D::delta(1), 2,
                                                  Shape{img.n, img.h, img.w, 1});
    CompositeOperator joint({blur, avg, down});
    REQUIRE(joint.input_shape() == img);
    REQUIRE(joint.output_shape() == Shape{1, 8, 8, 1});
    const Tensor y = joint.forward(random_tensor(img, 8));
    REQUIRE(y.shape() == Shape{1, 8, 8, 1});
}

TEST_CASE("concurrent forward/adjoint calls on one operator are safe and consistent") {
    KernelParams p;
    p.sigma = 1.1;
    const Kernel2D k = make_kernel(KernelKind::Gaussian, 5, p, 0);
    const Shape s{1, 16, 16, 3};
    MotionBlurPeriodic blur(k, s);
    const Tensor x = random_tensor(s, 61);
    const Tensor serial_fwd = blur.forward(x);
    const Tensor serial_fft = blur.forward_fft(x);
    const Tensor serial_adj = blur.adjoint(x);

    std::vector<Tensor> results(6);
    std::vector<std::thread> threads;
    for (int t = 0; t < 6; ++t)
        threads.emplace_back([&, t] {
            results[static_cast<std::size_t>(t)] =
                t % 3 == 0 ? blur.forward(x) : t % 3 == 1 ? blur.forward_fft(x) : blur.adjoint(x);
        });
    for (auto& th : threads) th.join();
    for (int t = 0; t < 6; ++t) {
        const Tensor& want = t % 3 == 0 ? serial_fwd : t % 3 == 1 ? serial_fft : serial_adj;
        for (std::int64_t i = 0; i < want.size(); ++i)
            REQUIRE(results[static_cast<std::size_t>(t)][i] == want[i]);
    }
}

TEST_CASE("operator shape guards") {
    MotionBlurPeriodic blur(Kernel2D::delta(3), Shape{1, 8, 8, 1});
    REQUIRE_THROWS_AS(blur.forward(Tensor(Shape{1, 4, 4, 1})), Error);
    REQUIRE_THROWS_AS(blur.adjoint(Tensor(Shape{1, 4, 4, 1})), Error);
    REQUIRE_THROWS_AS(StridedConvDown(Kernel2D::delta(1), 3, Shape{1, 8, 8, 1}), Error);
    MotionBlurPeriodic big(Kernel2D::delta(1), Shape{1, 65, 65, 1});
    REQUIRE_THROWS_AS(materialize_dense(big), Error);
    // oversized kernels are valid for the spatial path but not for transfer()
    MotionBlurPeriodic wrap(Kernel2D::delta(9), Shape{1, 4, 4, 1});
    REQUIRE_NOTHROW(wrap.forward(Tensor(Shape{1, 4, 4, 1})));
    REQUIRE_THROWS_AS(wrap.transfer(), Error);
}

TEST_CASE("bicubic resize: identity, constants, and the direct-evaluation oracle") {
    const Tensor x = random_tensor(Shape{1, 4, 4, 2}, 55, 0.0, 1.0);
    const Tensor same = bicubic_resize(x, 4, 4);
    for (std::int64_t i = 0; i < x.size(); ++i) REQUIRE(same[i] == x[i]);

    Tensor c(Shape{1, 5, 7, 3}, std::vector<double>(105, 0.77));
    const Tensor up = bicubic_resize(c, 13, 3);
    for (std::int64_t i = 0; i < up.size(); ++i)
        REQUIRE(up[i] == Catch::Approx(0.77).margin(1e-12));

    // 4x4 ramp upsampled x2 against a direct separable kernel-sum oracle
    Tensor ramp(Shape{1, 4, 4, 1});
    for (std::int64_t i = 0; i < 4; ++i)
        for (std::int64_t j = 0; j < 4; ++j)
            ramp.at(0, i, j, 0) = static_cast<double>(i) * 0.25 + static_cast<double>(j) * 0.1;
    const Tensor out = bicubic_resize(ramp, 8, 8);
    auto cubic = [](double t) {
        constexpr double a = -0.5;
        t = std::abs(t);
        if (t <= 1.0) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
        if (t < 2.0) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
        return 0.0;
    };
    for (std::int64_t oi = 0; oi < 8; ++oi) {
        for (std::int64_t oj = 0; oj < 8; ++oj) {
            auto axis = [&](std::int64_t o, double* w, std::int64_t* idx) {
                const double src = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
                const std::int64_t base = static_cast<std::int64_t>(std::floor(src));
                const double f = src - static_cast<double>(base);
                double sum = 0.0;
                for (int t = 0; t < 4; ++t) {
                    w[t] = cubic(f - static_cast<double>(t - 1));
                    sum += w[t];
                    idx[t] = std::min<std::int64_t>(3, std::max<std::int64_t>(0, base + t - 1));
                }
                for (int t = 0; t < 4; ++t) w[t] /= sum;
            };
            double wi[4], wj[4];
            std::int64_t ii[4], jj[4];
            axis(oi, wi, ii);
            axis(oj, wj, jj);
            double expect = 0.0;
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) expect += wi[a] * wj[b] * ramp.at(0, ii[a], jj[b], 0);
            REQUIRE(out.at(0, oi, oj, 0) == Catch::Approx(expect).margin(1e-10));
        }
    }

    REQUIRE_THROWS_AS(bicubic_resize(x, 0, 4), Error);
}
