#ifndef INVERSENET_LOSSES_HPP
#define INVERSENET_LOSSES_HPP

#include "inversenet/networks.hpp"

// Soft-label GAN losses and the two generator objectives (non-saturating GAN
// term + reconstruction + feature matching). Discriminator outputs are
// probabilities clamped into (0,1), so every term here is finite.

namespace inversenet {

struct LossWeights {
    double lambda_r = 0.5;  // reconstruction
    double lambda_f = 0.5;  // feature matching

    void validate() const {
        if (lambda_r < 0.0 || lambda_f < 0.0)
            throw Error("LossWeights: weights must be nonnegative");
    }
};

constexpr double kRealLabel = 0.99;
constexpr double kFakeLabel = 0.01;

// Mean over the batch of -l*log(D) - (1-l)*log(1-D).
inline double soft_gan_loss(const Tensor& d_out, double label) {
    if (label < 0.0 || label > 1.0)
        throw Error("soft_gan_loss: label " + std::to_string(label) + " outside [0,1]");
    double acc = 0.0;
    for (std::int64_t i = 0; i < d_out.size(); ++i) {
        const double d = d_out[i];
        if (d <= 0.0 || d >= 1.0)
            throw Error("soft_gan_loss: discriminator output " + std::to_string(d) +
                        " outside (0,1)");
        acc += -label * std::log(d) - (1.0 - label) * std::log(1.0 - d);
    }
    return acc / static_cast<double>(d_out.size());
}

inline Tensor soft_gan_loss_grad(const Tensor& d_out, double label) {
    Tensor g(d_out.shape());
    const double inv_n = 1.0 / static_cast<double>(d_out.size());
    for (std::int64_t i = 0; i < d_out.size(); ++i) {
        const double d = d_out[i];
        g[i] = (-label / d + (1.0 - label) / (1.0 - d)) * inv_n;
    }
    return g;
}

inline void accumulate(std::vector<Tensor>& into, std::vector<Tensor>&& add) {
    if (into.empty()) {
        into = std::move(add);
        return;
    }
    if (into.size() != add.size()) throw Error("accumulate: gradient list size mismatch");
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += add[i];
}

struct DiscriminatorLossResult {
    double total = 0.0;
    double real_term = 0.0, z_term = 0.0, xhat_term = 0.0;
    std::vector<Tensor> param_grads;  // aligned with D.params()
};

// L_D = soft(D(x), 0.99) + soft(D(z), 0.01) + soft(D(x_hat), 0.01); one
// shared discriminator sees the ground truth and both generator outputs.
inline DiscriminatorLossResult discriminator_loss(Graph& d, const Tensor& x, const Tensor& z,
                                                  const Tensor& x_hat, bool train = true,
                                                  bool update_stats = true) {
    if (x.shape() != z.shape() || x.shape() != x_hat.shape())
        throw Error("discriminator_loss: input shapes differ");
    DiscriminatorLossResult r;
    const struct {
        const Tensor* t;
        double label;
        double* term;
    } cases[] = {{&x, kRealLabel, &r.real_term},
                 {&z, kFakeLabel, &r.z_term},
                 {&x_hat, kFakeLabel, &r.xhat_term}};
    for (const auto& c : cases) {
        Graph::Trace t = d.forward(*c.t, nullptr, train, update_stats);
        *c.term = soft_gan_loss(t.output(), c.label);
        accumulate(r.param_grads, std::move(d.backward(t, soft_gan_loss_grad(t.output(), c.label)).params));
    }
    r.total = r.real_term + r.z_term + r.xhat_term;
    if (!std::isfinite(r.total))
        throw Error("discriminator_loss: non-finite loss (real " + std::to_string(r.real_term) +
                    ", z " + std::to_string(r.z_term) + ", xhat " + std::to_string(r.xhat_term) +
                    ")");
    return r;
}

struct GeneratorLossResult {
    double total = 0.0;
    double gan = 0.0, reconstruction = 0.0, feature = 0.0;
    Tensor grad_wrt_out;  // d total / d out
};

// L_G(out) = soft(D(out), 0.99) + lambda_r * ||out - x||^2
//          + lambda_f * ||C(out) - C(x)||^2, with D and C held fixed.
// The squared norms are unnormalized sums; at the reference weights this is
// what keeps the reconstruction pull comparable to the GAN gradient.
// Gradients w.r.t. D's and C's own parameters are discarded here.
inline GeneratorLossResult generator_loss(const Tensor& out, const Tensor& x, Graph& d,
                                          ComparatorHandle& comparator, const LossWeights& w,
                                          bool train = true) {
    w.validate();
    if (out.shape() != x.shape()) throw Error("generator_loss: shape mismatch");
    GeneratorLossResult r;
    r.grad_wrt_out = Tensor(out.shape());

    {
        Graph::Trace t = d.forward(out, nullptr, train, /*update_stats=*/false);
        r.gan = soft_gan_loss(t.output(), kRealLabel);
        r.grad_wrt_out += d.backward(t, soft_gan_loss_grad(t.output(), kRealLabel)).input;
    }
    if (w.lambda_r > 0.0) {
        for (std::int64_t i = 0; i < out.size(); ++i) {
            const double diff = out[i] - x[i];
            r.reconstruction += diff * diff;
            r.grad_wrt_out[i] += w.lambda_r * 2.0 * diff;
        }
    }
    if (w.lambda_f > 0.0) {
        const Tensor cx = comparator_features(comparator, x);
        Graph::Trace t = comparator.net.forward(out, nullptr, /*train=*/false, false);
        const Tensor& cout_f = t.output();
        Tensor dfeat(cout_f.shape());
        for (std::int64_t i = 0; i < cout_f.size(); ++i) {
            const double diff = cout_f[i] - cx[i];
            r.feature += diff * diff;
            dfeat[i] = 2.0 * diff;
        }
        Tensor dz = comparator.net.backward(t, dfeat).input;
        dz *= w.lambda_f;
        r.grad_wrt_out += dz;
    }
    r.total = r.gan + w.lambda_r * r.reconstruction + w.lambda_f * r.feature;
    if (!std::isfinite(r.total))
        throw Error("generator_loss: non-finite loss (gan " + std::to_string(r.gan) + ", rec " +
                    std::to_string(r.reconstruction) + ", feat " + std::to_string(r.feature) +
                    ")");
    return r;
}

}  // namespace inversenet

#endif  // INVERSENET_LOSSES_HPP
