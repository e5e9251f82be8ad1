#ifndef INVERSENET_OPERATORS_HPP
#define INVERSENET_OPERATORS_HPP

#include <memory>
#include <string>
#include <vector>

#include "inversenet/fft.hpp"
#include "inversenet/kernels.hpp"
#include "inversenet/tensor.hpp"

// Linear degradation operators: periodic motion blur (BCCB), strided
// convolutional downsampling, spectral averaging, and ordered composites.
// Every operator carries its exact adjoint.

namespace inversenet {

namespace detail {

// Periodic 2-D convolution (adjoint=false) or correlation (adjoint=true)
// with the kernel center aligned to the output pixel. Shared or per-channel.
inline Tensor periodic_conv(const Tensor& x, const Kernel2D& k, bool adjoint) {
    const Shape s = x.shape();
    if (k.channels != 1 && k.channels != s.c)
        throw Error("periodic_conv: kernel has " + std::to_string(k.channels) +
                    " channels, image has " + std::to_string(s.c));
    Tensor y(s);
    const std::int64_t ch0 = k.kh / 2, cw0 = k.kw / 2;
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t i = 0; i < s.h; ++i) {
            for (std::int64_t j = 0; j < s.w; ++j) {
                for (std::int64_t c = 0; c < s.c; ++c) {
                    const std::int64_t kc = k.channel_index(c);
                    double acc = 0.0;
                    for (std::int64_t a = 0; a < k.kh; ++a) {
                        for (std::int64_t b = 0; b < k.kw; ++b) {
                            std::int64_t ih, iw;
                            if (!adjoint) {
                                ih = (i - (a - ch0)) % s.h;
                                iw = (j - (b - cw0)) % s.w;
                            } else {
                                ih = (i + (a - ch0)) % s.h;
                                iw = (j + (b - cw0)) % s.w;
                            }
                            if (ih < 0) ih += s.h;
                            if (iw < 0) iw += s.w;
                            acc += k.at(kc, a, b) * x.at(n, ih, iw, c);
                        }
                    }
                    y.at(n, i, j, c) = acc;
                }
            }
        }
    }
    return y;
}

}  // namespace detail

// Eigenvalues of the BCCB matrix of periodic convolution with k on an h x w
// grid: the 2-D DFT of the kernel embedded with its center at index (0,0)
// under periodic wrap. One spectrum per kernel channel.
inline std::vector<std::vector<std::complex<double>>> bccb_transfer_function(
    const Kernel2D& k, std::int64_t h, std::int64_t w) {
    k.validate();
    if (k.kh > h || k.kw > w)
        throw Error("bccb_transfer_function: kernel " + std::to_string(k.kh) + "x" +
                    std::to_string(k.kw) + " larger than image " + std::to_string(h) + "x" +
                    std::to_string(w));
    std::vector<std::vector<std::complex<double>>> out;
    const std::int64_t ch0 = k.kh / 2, cw0 = k.kw / 2;
    for (std::int64_t ch = 0; ch < k.channels; ++ch) {
        std::vector<std::complex<double>> padded(static_cast<std::size_t>(h * w), 0.0);
        for (std::int64_t a = 0; a < k.kh; ++a) {
            for (std::int64_t b = 0; b < k.kw; ++b) {
                std::int64_t i = (a - ch0) % h;
                std::int64_t j = (b - cw0) % w;
                if (i < 0) i += h;
                if (j < 0) j += w;
                padded[static_cast<std::size_t>(i * w + j)] += k.at(ch, a, b);
            }
        }
        fft2(h, w, padded, /*inverse=*/false);
        out.push_back(std::move(padded));
    }
    return out;
}

class LinearOperator {
public:
    virtual ~LinearOperator() = default;
    virtual Tensor forward(const Tensor& x) const = 0;
    virtual Tensor adjoint(const Tensor& y) const = 0;
    virtual Shape input_shape() const = 0;
    virtual Shape output_shape() const = 0;
    virtual std::string describe() const = 0;

protected:
    void check_input(const Tensor& x) const {
        x.ensure_shape(input_shape(), describe() + ": forward input");
    }
    void check_output(const Tensor& y) const {
        y.ensure_shape(output_shape(), describe() + ": adjoint input");
    }
};

using OperatorPtr = std::shared_ptr<const LinearOperator>;

inline Tensor apply_forward(const LinearOperator& op, const Tensor& x) { return op.forward(x); }
inline Tensor apply_adjoint(const LinearOperator& op, const Tensor& y) { return op.adjoint(y); }

// Periodic 2-D blur; the matrix is block circulant with circulant blocks, so
// it is diagonalized by the 2-D DFT (see transfer()).
class MotionBlurPeriodic : public LinearOperator {
public:
    // Kernels larger than the image are fine for the spatial path (the wrap
    // just goes around more than once); only transfer() requires kh <= h.
    MotionBlurPeriodic(Kernel2D k, Shape img) : kernel_(std::move(k)), shape_(img) {
        kernel_.validate();
        if (kernel_.channels != 1 && kernel_.channels != img.c)
            throw Error("MotionBlurPeriodic: kernel channels mismatch image channels");
    }

    Tensor forward(const Tensor& x) const override {
        check_input(x);
        return detail::periodic_conv(x, kernel_, /*adjoint=*/false);
    }
    Tensor adjoint(const Tensor& y) const override {
        check_output(y);
        return detail::periodic_conv(y, kernel_, /*adjoint=*/true);
    }
    Shape input_shape() const override { return shape_; }
    Shape output_shape() const override { return shape_; }
    std::string describe() const override { return "motion_blur_periodic"; }

    const Kernel2D& kernel() const { return kernel_; }

    std::vector<std::vector<std::complex<double>>> transfer() const {
        return bccb_transfer_function(kernel_, shape_.h, shape_.w);
    }

    // Same map evaluated through the DFT diagonalization.
    Tensor forward_fft(const Tensor& x) const {
        check_input(x);
        const auto lambda = transfer();
        const Shape s = shape_;
        Tensor y(s);
        std::vector<std::complex<double>> buf(static_cast<std::size_t>(s.h * s.w));
        for (std::int64_t n = 0; n < s.n; ++n) {
            for (std::int64_t c = 0; c < s.c; ++c) {
                const auto& lam = lambda[static_cast<std::size_t>(kernel_.channel_index(c))];
                for (std::int64_t p = 0; p < s.h * s.w; ++p)
                    buf[static_cast<std::size_t>(p)] = x[(n * s.h * s.w + p) * s.c + c];
                fft2(s.h, s.w, buf, false);
                for (std::int64_t p = 0; p < s.h * s.w; ++p)
                    buf[static_cast<std::size_t>(p)] *= lam[static_cast<std::size_t>(p)];
                fft2(s.h, s.w, buf, true);
                for (std::int64_t p = 0; p < s.h * s.w; ++p)
                    y[(n * s.h * s.w + p) * s.c + c] = buf[static_cast<std::size_t>(p)].real();
            }
        }
        return y;
    }

private:
    Kernel2D kernel_;
    Shape shape_;
};

// Periodic convolution followed by keeping one pixel every d in both
// directions ("strided convolution"). Channels pass through unchanged.
class StridedConvDown : public LinearOperator {
public:
    StridedConvDown(Kernel2D k, std::int64_t d, Shape img)
        : kernel_(std::move(k)), stride_(d), in_(img) {
        kernel_.validate();
        if (d < 1) throw Error("StridedConvDown: stride must be positive");
        if (img.h % d != 0 || img.w % d != 0)
            throw Error("StridedConvDown: image dims " + img.str() +
                        " not divisible by stride " + std::to_string(d));
        if (kernel_.channels != 1 && kernel_.channels != img.c)
            throw Error("StridedConvDown: kernel channels mismatch image channels");
        out_ = Shape{img.n, img.h / d, img.w / d, img.c};
    }

    Tensor forward(const Tensor& x) const override {
        check_input(x);
        const Tensor z = detail::periodic_conv(x, kernel_, false);
        Tensor y(out_);
        for (std::int64_t n = 0; n < out_.n; ++n)
            for (std::int64_t i = 0; i < out_.h; ++i)
                for (std::int64_t j = 0; j < out_.w; ++j)
                    for (std::int64_t c = 0; c < out_.c; ++c)
                        y.at(n, i, j, c) = z.at(n, i * stride_, j * stride_, c);
        return y;
    }

    Tensor adjoint(const Tensor& y) const override {
        check_output(y);
        Tensor up(in_);  // zero-insertion upsampling
        for (std::int64_t n = 0; n < out_.n; ++n)
            for (std::int64_t i = 0; i < out_.h; ++i)
                for (std::int64_t j = 0; j < out_.w; ++j)
                    for (std::int64_t c = 0; c < out_.c; ++c)
                        up.at(n, i * stride_, j * stride_, c) = y.at(n, i, j, c);
        return detail::periodic_conv(up, kernel_, true);
    }

    Shape input_shape() const override { return in_; }
    Shape output_shape() const override { return out_; }
    std::string describe() const override { return "strided_conv_down"; }

    const Kernel2D& kernel() const { return kernel_; }
    std::int64_t stride() const { return stride_; }

private:
    Kernel2D kernel_;
    std::int64_t stride_;
    Shape in_, out_;
};

// Channel mean (RGB -> gray). Adjoint replicates with weight 1/c.
class SpectralAverage : public LinearOperator {
public:
    explicit SpectralAverage(Shape img) : in_(img) {
        if (img.c < 1) throw Error("SpectralAverage: needs at least one channel");
        out_ = Shape{img.n, img.h, img.w, 1};
    }

    Tensor forward(const Tensor& x) const override {
        check_input(x);
        Tensor y(out_);
        const double inv = 1.0 / static_cast<double>(in_.c);
        for (std::int64_t p = 0; p < in_.n * in_.h * in_.w; ++p) {
            double acc = 0.0;
            for (std::int64_t c = 0; c < in_.c; ++c) acc += x[p * in_.c + c];
            y[p] = acc * inv;
        }
        return y;
    }

    Tensor adjoint(const Tensor& y) const override {
        check_output(y);
        Tensor x(in_);
        const double inv = 1.0 / static_cast<double>(in_.c);
        for (std::int64_t p = 0; p < in_.n * in_.h * in_.w; ++p)
            for (std::int64_t c = 0; c < in_.c; ++c) x[p * in_.c + c] = y[p] * inv;
        return x;
    }

    Shape input_shape() const override { return in_; }
    Shape output_shape() const override { return out_; }
    std::string describe() const override { return "spectral_average"; }

private:
    Shape in_, out_;
};

// Ordered composition: forward applies stages first-to-last, adjoint
// last-to-first.
class CompositeOperator : public LinearOperator {
public:
    explicit CompositeOperator(std::vector<OperatorPtr> stages) : stages_(std::move(stages)) {
        if (stages_.empty()) throw Error("CompositeOperator: empty stage list");
        for (std::size_t i = 1; i < stages_.size(); ++i)
            if (stages_[i]->input_shape() != stages_[i - 1]->output_shape())
                throw Error("CompositeOperator: stage " + std::to_string(i) + " expects " +
                            stages_[i]->input_shape().str() + " but gets " +
                            stages_[i - 1]->output_shape().str());
    }

    Tensor forward(const Tensor& x) const override {
        check_input(x);
        Tensor cur = x;
        for (const auto& s : stages_) cur = s->forward(cur);
        return cur;
    }

    Tensor adjoint(const Tensor& y) const override {
        check_output(y);
        Tensor cur = y;
        for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) cur = (*it)->adjoint(cur);
        return cur;
    }

    Shape input_shape() const override { return stages_.front()->input_shape(); }
    Shape output_shape() const override { return stages_.back()->output_shape(); }
    std::string describe() const override {
        std::string s = "composite[";
        for (std::size_t i = 0; i < stages_.size(); ++i)
            s += (i ? "," : "") + stages_[i]->describe();
        return s + "]";
    }

    const std::vector<OperatorPtr>& stages() const { return stages_; }

private:
    std::vector<OperatorPtr> stages_;
};

struct DenseMatrix {
    std::int64_t rows = 0, cols = 0;
    std::vector<double> a;  // row-major

    double& at(std::int64_t r, std::int64_t c) { return a[static_cast<std::size_t>(r * cols + c)]; }
    double at(std::int64_t r, std::int64_t c) const {
        return a[static_cast<std::size_t>(r * cols + c)];
    }

    std::vector<double> matvec(const std::vector<double>& x) const {
        std::vector<double> y(static_cast<std::size_t>(rows), 0.0);
        for (std::int64_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::int64_t c = 0; c < cols; ++c) acc += at(r, c) * x[static_cast<std::size_t>(c)];
            y[static_cast<std::size_t>(r)] = acc;
        }
        return y;
    }
};

// Explicit matrix of the operator on vectorized tensors (test oracle; capped
// at 4096 input dims).
inline DenseMatrix materialize_dense(const LinearOperator& op) {
    const std::int64_t n = op.input_shape().count();
    const std::int64_t m = op.output_shape().count();
    if (n > 4096)
        throw Error("materialize_dense: input dimension " + std::to_string(n) +
                    " exceeds cap 4096");
    DenseMatrix d;
    d.rows = m;
    d.cols = n;
    d.a.assign(static_cast<std::size_t>(m * n), 0.0);
    for (std::int64_t col = 0; col < n; ++col) {
        Tensor e(op.input_shape());
        e[col] = 1.0;
        const Tensor y = op.forward(e);
        for (std::int64_t row = 0; row < m; ++row) d.at(row, col) = y[row];
    }
    return d;
}

}  // namespace inversenet

#endif  // INVERSENET_OPERATORS_HPP
