#ifndef INVERSENET_TENSOR_HPP
#define INVERSENET_TENSOR_HPP

#include <cassert>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace inversenet {

// All structured errors in the library derive from this.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct Shape {
    std::int64_t n = 0;  // batch
    std::int64_t h = 0;  // rows
    std::int64_t w = 0;  // cols
    std::int64_t c = 0;  // channels

    std::int64_t count() const { return n * h * w * c; }

    bool operator==(const Shape& o) const {
        return n == o.n && h == o.h && w == o.w && c == o.c;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << h << "," << w << "," << c << ")";
        return os.str();
    }
};

// Dense rank-4 array, row-major (n, h, w, c), double precision.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape s, double fill = 0.0)
        : shape_(s), data_(static_cast<std::size_t>(check_shape(s)), fill) {}

    Tensor(Shape s, std::vector<double> data) : shape_(s), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != check_shape(s))
            throw Error("Tensor: data length " + std::to_string(data_.size()) +
                        " does not match shape " + s.str());
    }

    const Shape& shape() const { return shape_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    std::int64_t index(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) const {
        assert(n >= 0 && n < shape_.n && h >= 0 && h < shape_.h && w >= 0 && w < shape_.w &&
               c >= 0 && c < shape_.c);
        return ((n * shape_.h + h) * shape_.w + w) * shape_.c + c;
    }

    double& at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) {
        return data_[static_cast<std::size_t>(index(n, h, w, c))];
    }
    double at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) const {
        return data_[static_cast<std::size_t>(index(n, h, w, c))];
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void ensure_finite(const std::string& context) const {
        if (!all_finite()) throw Error(context + ": tensor contains non-finite values");
    }

    void ensure_shape(const Shape& s, const std::string& context) const {
        if (shape_ != s)
            throw Error(context + ": expected shape " + s.str() + ", got " + shape_.str());
    }

    Tensor& operator+=(const Tensor& o) {
        check_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        check_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, double s) { return a *= s; }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }

    double sum() const {
        double s = 0.0;
        for (double v : data_) s += v;
        return s;
    }

    double mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size()); }

    double variance() const {
        if (data_.empty()) return 0.0;
        const double m = mean();
        double s = 0.0;
        for (double v : data_) s += (v - m) * (v - m);
        return s / static_cast<double>(data_.size());
    }

    double norm2() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

    double dot(const Tensor& o) const {
        check_same(o, "dot");
        double s = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i) s += data_[i] * o.data_[i];
        return s;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    static std::int64_t check_shape(const Shape& s) {
        if (s.n <= 0 || s.h <= 0 || s.w <= 0 || s.c <= 0)
            throw Error("Tensor: invalid shape " + s.str());
        return s.count();
    }

    void check_same(const Tensor& o, const char* op) const {
        if (shape_ != o.shape_)
            throw Error(std::string("Tensor") + op + ": shape mismatch " + shape_.str() +
                        " vs " + o.shape_.str());
    }

    Shape shape_;
    std::vector<double> data_;
};

inline double mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw Error("mse: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    double s = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

}  // namespace inversenet

#endif  // INVERSENET_TENSOR_HPP
