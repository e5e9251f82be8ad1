#include <catch2/catch_amalgamated.hpp>

#include "inversenet/metrics.hpp"
#include "inversenet/rng.hpp"

using namespace inversenet;

namespace {

Tensor random_image(Shape s, std::uint64_t seed) {
    Tensor t(s);
    Rng rng(seed);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.0, 1.0);
    return t;
}

}  // namespace

TEST_CASE("psnr: exact match flag, known MSE value, loop oracle") {
    const Tensor a = random_image(Shape{1, 8, 8, 3}, 1);
    const PsnrResult same = psnr(a, a);
    REQUIRE(same.exact_match);
    REQUIRE(same.db == 99.0);

    // MSE 0.01 -> 20 dB exactly
    Tensor b = a;
    Tensor c = a;
    for (std::int64_t i = 0; i < b.size(); ++i) c[i] = b[i] + 0.1;
    const PsnrResult twenty = psnr(b, c);
    REQUIRE_FALSE(twenty.exact_match);
    REQUIRE(twenty.db == Catch::Approx(20.0).margin(1e-12));

    // independent scalar-loop reimplementation
    const Tensor x = random_image(Shape{2, 5, 6, 3}, 2);
    const Tensor y = random_image(Shape{2, 5, 6, 3}, 3);
    double acc = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
    acc /= static_cast<double>(x.size());
    const double expect = 10.0 * std::log10(1.0 / acc);
    REQUIRE(psnr(x, y).db == Catch::Approx(expect).margin(1e-10));

    REQUIRE_THROWS_AS(psnr(x, Tensor(Shape{1, 5, 6, 3})), Error);
}

TEST_CASE("psnr strictly decreases as perturbation grows") {
    const Tensor a = random_image(Shape{1, 16, 16, 1}, 4);
    double prev = 1e9;
    for (double scale : {0.01, 0.02, 0.05, 0.1, 0.2}) {
        Tensor b = a;
        Rng rng(5);
        for (std::int64_t i = 0; i < b.size(); ++i) b[i] += scale * rng.uniform(0.5, 1.0);
        const double v = psnr(a, b).db;
        REQUIRE(v < prev);
        prev = v;
    }
}

TEST_CASE("ssim: self similarity is exactly 1, symmetric, bounded") {
    const Tensor a = random_image(Shape{1, 16, 16, 3}, 6);
    REQUIRE(ssim(a, a) == 1.0);

    const Tensor b = random_image(Shape{1, 16, 16, 3}, 7);
    const double ab = ssim(a, b);
    const double ba = ssim(b, a);
    REQUIRE(std::abs(ab - ba) < 1e-12);
    REQUIRE(ab >= -1.0);
    REQUIRE(ab <= 1.0);
}

TEST_CASE("ssim matches a direct per-window reference on a 32x32 pair") {
    const Tensor a = random_image(Shape{1, 32, 32, 1}, 8);
    const Tensor b = random_image(Shape{1, 32, 32, 1}, 9);
    const SSIMConfig cfg;
    const double got = ssim(a, b, cfg);

    // independent sliding-window implementation
    const std::int64_t W = 11, half = 5;
    std::vector<double> wgt(121);
    double wsum = 0.0;
    for (std::int64_t i = 0; i < W; ++i)
        for (std::int64_t j = 0; j < W; ++j) {
            const double di = static_cast<double>(i - half), dj = static_cast<double>(j - half);
            wgt[static_cast<std::size_t>(i * W + j)] =
                std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
            wsum += wgt[static_cast<std::size_t>(i * W + j)];
        }
    for (double& v : wgt) v /= wsum;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    std::int64_t count = 0;
    for (std::int64_t i = half; i + half < 32; ++i) {
        for (std::int64_t j = half; j + half < 32; ++j) {
            double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
            for (std::int64_t wi = -half; wi <= half; ++wi)
                for (std::int64_t wj = -half; wj <= half; ++wj) {
                    const double w = wgt[static_cast<std::size_t>((wi + half) * W + wj + half)];
                    ma += w * a.at(0, i + wi, j + wj, 0);
                    mb += w * b.at(0, i + wi, j + wj, 0);
                }
            for (std::int64_t wi = -half; wi <= half; ++wi)
                for (std::int64_t wj = -half; wj <= half; ++wj) {
                    const double w = wgt[static_cast<std::size_t>((wi + half) * W + wj + half)];
                    const double da = a.at(0, i + wi, j + wj, 0) - ma;
                    const double db = b.at(0, i + wi, j + wj, 0) - mb;
                    va += w * da * da;
                    vb += w * db * db;
                    cov += w * da * db;
                }
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    REQUIRE(got == Catch::Approx(total / static_cast<double>(count)).margin(1e-8));
}

TEST_CASE("ssim rejects undersized images") {
    REQUIRE_THROWS_AS(ssim(Tensor(Shape{1, 8, 8, 1}), Tensor(Shape{1, 8, 8, 1})), Error);
}

TEST_CASE("range maps round trip and clamp") {
    Tensor x(Shape{1, 1, 1, 3}, std::vector<double>{-1.0, 0.0, 1.0});
    const Tensor u = to_unit_range(x);
    REQUIRE(u[0] == 0.0);
    REQUIRE(u[1] == 0.5);
    REQUIRE(u[2] == 1.0);
    const Tensor s = to_signed_range(u);
    for (std::int64_t i = 0; i < 3; ++i) REQUIRE(s[i] == Catch::Approx(x[i]).margin(1e-15));
    Tensor over(Shape{1, 1, 1, 1}, std::vector<double>{1.7});
    REQUIRE(to_unit_range(over)[0] == 1.0);
}
