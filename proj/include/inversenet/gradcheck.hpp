#ifndef INVERSENET_GRADCHECK_HPP
#define INVERSENET_GRADCHECK_HPP

#include <functional>

#include "inversenet/graph.hpp"

// Central finite-difference verification of reverse-mode gradients.

namespace inversenet {

enum class GradCheckLoss {
    HalfSumSquares,  // L = 0.5 * sum(out^2)        (exact for linear graphs)
    WeightedSum,     // L = sum(w .* out), fixed pseudo-random w in +/-[0.5,1.5]
};

inline Tensor gradcheck_loss_weights(const Shape& s, std::uint64_t seed = 0xC0FFEE) {
    Tensor w(s);
    Rng rng(mix_seed(seed, 17));
    for (std::int64_t i = 0; i < w.size(); ++i) {
        const double mag = rng.uniform(0.5, 1.5);
        w[i] = rng.uniform() < 0.5 ? -mag : mag;
    }
    return w;
}

inline double gradcheck_loss_value(const Tensor& out, GradCheckLoss kind) {
    if (kind == GradCheckLoss::HalfSumSquares) {
        double s = 0.0;
        for (std::int64_t i = 0; i < out.size(); ++i) s += out[i] * out[i];
        return 0.5 * s;
    }
    const Tensor w = gradcheck_loss_weights(out.shape());
    return w.dot(out);
}

inline Tensor gradcheck_loss_grad(const Tensor& out, GradCheckLoss kind) {
    if (kind == GradCheckLoss::HalfSumSquares) return out;
    return gradcheck_loss_weights(out.shape());
}

inline double rel_error(double analytic, double cd) {
    return std::abs(analytic - cd) / std::max({std::abs(analytic), std::abs(cd), 1e-8});
}

// Generic central-difference check: `analytic` aligned with the flattened
// concatenation of `params`; `eval` recomputes the scalar loss at the current
// parameter values. Returns the max relative error.
inline double finite_diff_max_rel_error(const std::vector<Tensor*>& params,
                                        const std::vector<Tensor>& analytic,
                                        const std::function<double()>& eval, double step) {
    if (params.size() != analytic.size())
        throw Error("finite_diff: gradient list does not match parameter list");
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& theta = *params[p];
        if (theta.shape() != analytic[p].shape())
            throw Error("finite_diff: gradient shape mismatch at parameter " + std::to_string(p));
        for (std::int64_t i = 0; i < theta.size(); ++i) {
            const double saved = theta[i];
            theta[i] = saved + step;
            const double lp = eval();
            theta[i] = saved - step;
            const double lm = eval();
            theta[i] = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw Error("finite_diff: non-finite loss during perturbation");
            const double cd = (lp - lm) / (2.0 * step);
            worst = std::max(worst, rel_error(analytic[p][i], cd));
        }
    }
    return worst;
}

// Exhaustive check of every trainable parameter (and the graph input) of a
// compiled graph against central differences of the chosen scalar reduction.
inline double gradient_check(Graph& g, const Tensor& input, const Tensor* aux,
                             GradCheckLoss kind = GradCheckLoss::WeightedSum,
                             double step = 1e-5, bool train = true, bool check_input = true) {
    if (g.param_count() > 10000)
        throw Error("gradient_check: parameter count " + std::to_string(g.param_count()) +
                    " exceeds the exhaustive-perturbation cap (10000)");

    Graph::Trace t = g.forward(input, aux, train, /*update_stats=*/false);
    const double base = gradcheck_loss_value(t.output(), kind);
    if (!std::isfinite(base)) throw Error("gradient_check: non-finite loss");
    Graph::Gradients grads = g.backward(t, gradcheck_loss_grad(t.output(), kind));

    std::vector<Tensor*> params;
    for (const Graph::ParamRef& p : g.params()) params.push_back(p.tensor);

    Tensor in_copy = input;
    Tensor aux_copy = aux ? *aux : Tensor();
    const auto eval = [&]() {
        return gradcheck_loss_value(
            g.forward(in_copy, aux ? &aux_copy : nullptr, train, false).output(), kind);
    };
    double worst = finite_diff_max_rel_error(params, grads.params, eval, step);

    if (check_input) {
        std::vector<Tensor*> in_list{&in_copy};
        std::vector<Tensor> in_grad;
        in_grad.push_back(grads.input);
        worst = std::max(worst, finite_diff_max_rel_error(in_list, in_grad, eval, step));
        if (aux) {
            std::vector<Tensor*> aux_list{&aux_copy};
            std::vector<Tensor> aux_grad;
            aux_grad.push_back(grads.aux);
            worst = std::max(worst, finite_diff_max_rel_error(aux_list, aux_grad, eval, step));
        }
    }
    return worst;
}

}  // namespace inversenet

#endif  // INVERSENET_GRADCHECK_HPP
