#ifndef INVERSENET_NETWORKS_HPP
#define INVERSENET_NETWORKS_HPP

#include "inversenet/graph.hpp"
#include "inversenet/resize.hpp"

// Builders for the U-Net inversion network, the pixel-shuffling denoising
// autoencoder, the discriminator, and the fixed comparator, plus the composed
// generator pipeline y -> z -> x_hat.

namespace inversenet {

// Encoder: stride-2 4x4 convs with leaky_relu pre-activations and batch norm,
// filter plan filters[0..L-1]. Decoder mirrors with stride-2 transposed convs
// (relu pre-activations), concatenating encoder output e_{L-j} at step j, and
// ends with a tanh. Input and output have the same spatial size.
struct UNetConfig {
    std::int64_t size = 256;
    std::int64_t in_channels = 3;
    std::int64_t out_channels = 3;
    std::vector<std::int64_t> filters = {16, 32, 64, 128, 128, 128, 128, 128};
    double leak = 0.2;

    std::int64_t levels() const { return static_cast<std::int64_t>(filters.size()); }

    void validate() const {
        if (size < 4 || (size & (size - 1)) != 0)
            throw Error("UNetConfig: size must be a power of two >= 4, got " +
                        std::to_string(size));
        if (filters.size() < 2) throw Error("UNetConfig: need at least 2 levels");
        for (std::int64_t f : filters)
            if (f < 1) throw Error("UNetConfig: filter counts must be positive");
        if (size >> levels() < 1)
            throw Error("UNetConfig: " + std::to_string(levels()) +
                        " levels do not fit a " + std::to_string(size) + " input");
        if (in_channels < 1 || out_channels < 1) throw Error("UNetConfig: bad channel counts");
    }
};

inline Graph build_unet(const UNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::int64_t L = cfg.levels();
    std::vector<LayerSpec> spec;

    spec.push_back(layers::conv(4, 4, cfg.in_channels, cfg.filters[0], 2).named("e1"));
    for (std::int64_t i = 1; i < L; ++i) {
        spec.push_back(layers::leaky_relu(cfg.leak));
        spec.push_back(layers::conv(4, 4, cfg.filters[i - 1], cfg.filters[i], 2).without_bias());
        spec.push_back(layers::batch_norm().named("e" + std::to_string(i + 1)));
    }
    for (std::int64_t j = 1; j < L; ++j) {
        // step j consumes d_{j-1} (2*filters[L-j] channels after the concat;
        // filters[L-1] for the bottleneck itself) and emits filters[L-j-1]
        // channels, doubled by concatenating e_{L-j}
        const std::int64_t cin = (j == 1) ? cfg.filters[L - 1] : 2 * cfg.filters[L - j];
        spec.push_back(layers::relu());
        spec.push_back(layers::conv_transpose(4, 4, cin, cfg.filters[L - j - 1], 2).without_bias());
        spec.push_back(layers::batch_norm());
        spec.push_back(layers::concat("e" + std::to_string(L - j)).named("d" + std::to_string(j)));
    }
    spec.push_back(layers::relu());
    spec.push_back(layers::conv_transpose(4, 4, 2 * cfg.filters[0], cfg.out_channels, 2));
    spec.push_back(layers::tanh().named("d" + std::to_string(L)));

    return Graph::compile(std::move(spec), Shape{1, cfg.size, cfg.size, cfg.in_channels}, seed);
}

// Pixel-unshuffle by r, conv stack, optional concat with the y-scale tensor
// (the graph's aux input), conv stack, linear conv back to in_channels*r^2,
// pixel-shuffle by r. All convs are 4x4 stride 1 with batch norm + relu
// except the final linear one.
struct DAEConfig {
    std::int64_t size = 256;
    std::int64_t r = 4;
    std::int64_t in_channels = 3;   // z channels (image channels)
    std::int64_t aux_channels = 3;  // channels of the concatenated y-scale tensor
    std::vector<std::int64_t> pre_channels = {128, 64, 32};
    std::vector<std::int64_t> post_channels = {64, 128};
    bool concat_y = true;

    void validate() const {
        if (r < 1) throw Error("DAEConfig: shuffle factor must be positive");
        if (size < r || size % r != 0)
            throw Error("DAEConfig: size " + std::to_string(size) + " not divisible by r=" +
                        std::to_string(r));
        if (pre_channels.empty() || post_channels.empty())
            throw Error("DAEConfig: channel plans must be nonempty");
        for (std::int64_t c : pre_channels)
            if (c < 1) throw Error("DAEConfig: bad pre channel");
        for (std::int64_t c : post_channels)
            if (c < 1) throw Error("DAEConfig: bad post channel");
        if (in_channels < 1 || (concat_y && aux_channels < 1))
            throw Error("DAEConfig: bad channel counts");
    }

    Shape aux_shape() const { return Shape{1, size / r, size / r, aux_channels}; }
};

inline Graph build_dae(const DAEConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::vector<LayerSpec> spec;
    std::int64_t cur = cfg.in_channels * cfg.r * cfg.r;

    spec.push_back(layers::pixel_unshuffle(cfg.r).named("unshuffle"));
    int idx = 0;
    for (std::int64_t ch : cfg.pre_channels) {
        spec.push_back(layers::conv(4, 4, cur, ch, 1).without_bias());
        spec.push_back(layers::batch_norm());
        spec.push_back(layers::relu().named("pre" + std::to_string(++idx)));
        cur = ch;
    }
    if (cfg.concat_y) {
        spec.push_back(layers::concat("aux").named("concat_y"));
        cur += cfg.aux_channels;
    }
    idx = 0;
    for (std::int64_t ch : cfg.post_channels) {
        spec.push_back(layers::conv(4, 4, cur, ch, 1).without_bias());
        spec.push_back(layers::batch_norm());
        spec.push_back(layers::relu().named("post" + std::to_string(++idx)));
        cur = ch;
    }
    spec.push_back(layers::conv(4, 4, cur, cfg.in_channels * cfg.r * cfg.r, 1).named("expand"));
    spec.push_back(layers::pixel_shuffle(cfg.r).named("shuffle"));

    return Graph::compile(std::move(spec), Shape{1, cfg.size, cfg.size, cfg.in_channels}, seed,
                          cfg.concat_y ? std::optional<Shape>(cfg.aux_shape()) : std::nullopt);
}

// DCGAN-style binary classifier: stride-2 4x4 convs (leaky_relu, batch norm
// after the first), channel plan 16*2^level capped at 128, down to a 4x4 (or
// smaller) map, then dense + clamped sigmoid. Output D(x) in (0,1), shape
// (n,1,1,1).
inline Graph build_discriminator(std::int64_t size, std::int64_t in_channels,
                                 std::uint64_t seed) {
    if (size < 8 || (size & (size - 1)) != 0)
        throw Error("build_discriminator: size must be a power of two >= 8, got " +
                    std::to_string(size));
    if (in_channels < 1) throw Error("build_discriminator: bad channel count");

    std::vector<LayerSpec> spec;
    std::int64_t ch = 16;
    std::int64_t cur_c = in_channels;
    std::int64_t cur_size = size;
    bool first = true;
    while (cur_size > 4) {
        spec.push_back(first ? layers::conv(4, 4, cur_c, ch, 2)
                             : layers::conv(4, 4, cur_c, ch, 2).without_bias());
        if (!first) spec.push_back(layers::batch_norm());
        spec.push_back(layers::leaky_relu(0.2));
        cur_c = ch;
        ch = std::min<std::int64_t>(ch * 2, 128);
        cur_size /= 2;
        first = false;
    }
    spec.push_back(layers::dense(1));
    spec.push_back(layers::sigmoid().named("prob"));
    return Graph::compile(std::move(spec), Shape{1, size, size, in_channels}, seed);
}

// Fixed feature extractor C(.) for the feature-matching loss. Never trained;
// either random weights from a seed or externally loaded ones.
struct ComparatorConfig {
    std::int64_t size = 256;
    std::int64_t in_channels = 3;
    std::int64_t features = 64;

    void validate() const {
        if (size < 8 || (size & (size - 1)) != 0)
            throw Error("ComparatorConfig: size must be a power of two >= 8");
        if (in_channels < 1 || features < 1) throw Error("ComparatorConfig: bad counts");
    }
};

struct ComparatorHandle {
    Graph net;
    std::string provenance;  // "random_fixed(seed)" or "external(<path>)"

    Shape feature_shape() const { return net.output_shape(); }
};

inline ComparatorHandle build_comparator(const ComparatorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::vector<LayerSpec> spec;
    std::int64_t cur_c = cfg.in_channels;
    std::int64_t ch = 8;
    std::int64_t cur_size = cfg.size;
    while (cur_size > 8) {
        spec.push_back(layers::conv(4, 4, cur_c, ch, 2));
        spec.push_back(layers::leaky_relu(0.2));
        cur_c = ch;
        ch = std::min<std::int64_t>(ch * 2, 64);
        cur_size /= 2;
    }
    spec.push_back(layers::dense(cfg.features).named("fc"));
    ComparatorHandle h{Graph::compile(std::move(spec), Shape{1, cfg.size, cfg.size, cfg.in_channels}, seed),
                       "random_fixed(" + std::to_string(seed) + ")"};
    return h;
}

// Feature map C(x); deterministic, differentiable w.r.t. x, never updated.
inline Tensor comparator_features(ComparatorHandle& c, const Tensor& x) {
    return c.net.apply(x, nullptr, /*train=*/false);
}

enum class Preprocess { None, Bicubic };

// The composed generator pipeline: optional bicubic resize of y to the U-Net
// input size, z = UNet(y'), x_hat = DAE(z, y-scale tensor). Returns both.
struct PipelineResult {
    Tensor z;
    Tensor x_hat;
};

inline Tensor dae_aux_from_y(const Tensor& y, const Graph& dae) {
    if (!dae.aux_shape().has_value())
        return Tensor();
    const Shape want = *dae.aux_shape();
    if (y.shape().c != want.c)
        throw Error("dae aux: y has " + std::to_string(y.shape().c) + " channels, DAE expects " +
                    std::to_string(want.c));
    if (y.shape().h == want.h && y.shape().w == want.w) return y;
    return bicubic_resize(y, want.h, want.w);
}

inline PipelineResult inversenet_forward(Graph& unet, Graph& dae, const Tensor& y,
                                         Preprocess pre, bool train = false) {
    Tensor y_in = y;
    if (pre == Preprocess::Bicubic) {
        const Shape want = unet.input_shape();
        if (y.shape().h != want.h || y.shape().w != want.w)
            y_in = bicubic_resize(y, want.h, want.w);
    }
    PipelineResult out;
    out.z = unet.apply(y_in, nullptr, train);
    if (dae.aux_shape().has_value()) {
        const Tensor aux = dae_aux_from_y(y, dae);
        out.x_hat = dae.apply(out.z, &aux, train);
    } else {
        out.x_hat = dae.apply(out.z, nullptr, train);
    }
    return out;
}

}  // namespace inversenet

#endif  // INVERSENET_NETWORKS_HPP
