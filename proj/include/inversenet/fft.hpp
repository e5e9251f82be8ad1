#ifndef INVERSENET_FFT_HPP
#define INVERSENET_FFT_HPP

#include <fftw3.h>

#include <complex>
#include <mutex>
#include <vector>

#include "inversenet/tensor.hpp"

// Thin FFTW wrapper for 2-D complex transforms. FFTW planning is not
// thread-safe, so plan creation/destruction is serialized; execution is safe.

namespace inversenet {

inline std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

inline void fft2(std::int64_t h, std::int64_t w, std::vector<std::complex<double>>& data,
                 bool inverse) {
    if (static_cast<std::int64_t>(data.size()) != h * w)
        throw Error("fft2: buffer size does not match " + std::to_string(h) + "x" +
                    std::to_string(w));
    fftw_complex* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        plan = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf, buf,
                                inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
    }
    if (!plan) throw Error("fft2: planning failed");
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_destroy_plan(plan);
    }
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(h * w);
        for (auto& v : data) v *= scale;
    }
}

}  // namespace inversenet

#endif  // INVERSENET_FFT_HPP
