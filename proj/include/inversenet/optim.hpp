#ifndef INVERSENET_OPTIM_HPP
#define INVERSENET_OPTIM_HPP

#include "inversenet/graph.hpp"

namespace inversenet {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (!(lr >= 0.0) || beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 ||
            !(eps > 0.0))
            throw Error("AdamConfig: invalid hyperparameters");
    }
};

// First/second moments aligned with one network's trainable parameter list,
// plus the shared step counter.
struct AdamState {
    std::vector<Tensor> m, v;
    std::int64_t step = 0;

    static AdamState init_like(std::vector<Graph::ParamRef> params) {
        AdamState s;
        for (const auto& p : params) {
            s.m.emplace_back(p.tensor->shape());
            s.v.emplace_back(p.tensor->shape());
        }
        return s;
    }
};

// Scales the gradient set so its global L2 norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_global_norm(std::vector<Tensor>& grads, double max_norm = 5.0) {
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (std::int64_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (Tensor& g : grads)
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= scale;
    }
    return norm;
}

// Standard bias-corrected Adam update applied in place.
inline void adam_step(std::vector<Graph::ParamRef> params, const std::vector<Tensor>& grads,
                      AdamState& state, const AdamConfig& cfg) {
    cfg.validate();
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw Error("adam_step: parameter/gradient/state size mismatch");
    for (const Tensor& g : grads)
        if (!g.all_finite()) throw Error("adam_step: non-finite gradient");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& theta = *params[p].tensor;
        const Tensor& g = grads[p];
        if (theta.shape() != g.shape())
            throw Error("adam_step: gradient shape mismatch at '" + params[p].name + "'");
        Tensor& m = state.m[p];
        Tensor& v = state.v[p];
        for (std::int64_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace inversenet

#endif  // INVERSENET_OPTIM_HPP
