#ifndef INVERSENET_RNG_HPP
#define INVERSENET_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace inversenet {

// splitmix64 -- used to derive independent stream seeds from (seed, index)
// pairs so that e.g. per-layer init and per-iteration batch sampling are
// stateless functions of the experiment seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 0x51D2CE794B90C1F5ULL));
}

// Deterministic double generators built directly on mt19937_64 output.
// std::normal_distribution has an implementation-defined sequence; Box-Muller
// over uniform doubles keeps results bitwise reproducible across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (one value per pair; spare cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Normal(0, std) truncated to +/- 2 std by resampling.
    double truncated_normal(double stddev) {
        for (;;) {
            const double v = normal();
            if (v >= -2.0 && v <= 2.0) return v * stddev;
        }
    }

    // Fisher-Yates shuffle of [0, n); deterministic given the engine state.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(engine_() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace inversenet

#endif  // INVERSENET_RNG_HPP
