#ifndef INVERSENET_TRAINING_HPP
#define INVERSENET_TRAINING_HPP

#include <functional>

#include "inversenet/losses.hpp"
#include "inversenet/metrics.hpp"
#include "inversenet/optim.hpp"

// The joint adversarial training loop: per step, K discriminator updates on
// (x, z, x_hat), then one U-Net update with L_G(z), then one DAE update with
// L_G(x_hat). z is recomputed after the U-Net update; the DAE update does not
// backpropagate into the U-Net (the gradient stops at z).

namespace inversenet {

struct TrainHyperparams {
    AdamConfig adam;          // lr 1e-4, beta1 0.5, beta2 0.999, eps 1e-8
    double clip_norm = 5.0;   // per-network global-norm gradient clip
    int k_disc = 1;           // discriminator steps per generator step
    std::int64_t batch_size = 36;
    LossWeights weights;      // lambda_r = lambda_f = 0.5

    void validate() const {
        adam.validate();
        weights.validate();
        if (!(clip_norm > 0.0)) throw Error("TrainHyperparams: clip_norm must be > 0");
        if (k_disc < 1) throw Error("TrainHyperparams: k_disc must be >= 1");
        if (batch_size < 1) throw Error("TrainHyperparams: batch_size must be >= 1");
    }
};

struct TrainingState {
    Graph unet, dae, disc;
    ComparatorHandle comparator;
    AdamState opt_unet, opt_dae, opt_disc;
    std::int64_t iteration = 0;
    std::uint64_t seed = 0;
    TrainHyperparams hp;

    void init_optimizers() {
        opt_unet = AdamState::init_like(unet.params());
        opt_dae = AdamState::init_like(dae.params());
        opt_disc = AdamState::init_like(disc.params());
    }
};

struct StepMetrics {
    double loss_d = 0.0, loss_g_z = 0.0, loss_g_xhat = 0.0;
    double psnr_z = 0.0, psnr_xhat = 0.0;
    double mean_x_minus_z = 0.0, var_x_minus_z = 0.0;
    double mean_xhat_minus_z = 0.0, var_xhat_minus_z = 0.0;
};

namespace detail {

inline std::vector<Tensor> clipped(std::vector<Tensor> grads, double max_norm) {
    clip_global_norm(grads, max_norm);
    return grads;
}

inline void residual_stats(const Tensor& a, const Tensor& b, double& mean, double& var) {
    Tensor d = a;
    d -= b;
    mean = d.mean();
    var = d.variance();
}

}  // namespace detail

// One Algorithm-1 step on a prepared batch. x and y_unet are [-1,1] tensors
// of equal batch; dae_aux is the y-scale tensor (nullptr when the DAE takes
// no concat input).
inline StepMetrics train_step(TrainingState& st, const Tensor& x, const Tensor& y_unet,
                              const Tensor* dae_aux) {
    st.hp.validate();
    StepMetrics out;

    // generator outputs for the discriminator phase (current parameters)
    const Tensor z0 = st.unet.apply(y_unet, nullptr, /*train=*/true);
    const Tensor xhat0 = st.dae.apply(z0, dae_aux, /*train=*/true);

    for (int k = 0; k < st.hp.k_disc; ++k) {
        DiscriminatorLossResult dl =
            discriminator_loss(st.disc, x, z0, xhat0, /*train=*/true, /*update_stats=*/true);
        adam_step(st.disc.params(), detail::clipped(std::move(dl.param_grads), st.hp.clip_norm),
                  st.opt_disc, st.hp.adam);
        out.loss_d = dl.total;
    }

    // U-Net update via L_G(z) against the freshly updated discriminator
    {
        Graph::Trace t = st.unet.forward(y_unet, nullptr, /*train=*/true, /*update_stats=*/true);
        GeneratorLossResult gl =
            generator_loss(t.output(), x, st.disc, st.comparator, st.hp.weights, /*train=*/true);
        Graph::Gradients grads = st.unet.backward(t, gl.grad_wrt_out);
        adam_step(st.unet.params(), detail::clipped(std::move(grads.params), st.hp.clip_norm),
                  st.opt_unet, st.hp.adam);
        out.loss_g_z = gl.total;
    }

    // DAE update via L_G(x_hat); z recomputed with the updated U-Net, and the
    // chain is cut at z (grads.input is discarded)
    const Tensor z1 = st.unet.apply(y_unet, nullptr, /*train=*/true);
    {
        Graph::Trace t = st.dae.forward(z1, dae_aux, /*train=*/true, /*update_stats=*/true);
        GeneratorLossResult gl =
            generator_loss(t.output(), x, st.disc, st.comparator, st.hp.weights, /*train=*/true);
        Graph::Gradients grads = st.dae.backward(t, gl.grad_wrt_out);
        adam_step(st.dae.params(), detail::clipped(std::move(grads.params), st.hp.clip_norm),
                  st.opt_dae, st.hp.adam);
        out.loss_g_xhat = gl.total;

        const Tensor& xhat1 = t.output();
        out.psnr_z = psnr(to_unit_range(z1), to_unit_range(x)).db;
        out.psnr_xhat = psnr(to_unit_range(xhat1), to_unit_range(x)).db;
        detail::residual_stats(x, z1, out.mean_x_minus_z, out.var_x_minus_z);
        detail::residual_stats(xhat1, z1, out.mean_xhat_minus_z, out.var_xhat_minus_z);
    }

    st.iteration += 1;
    return out;
}

// Paired training data, already mapped to [-1,1] and pre-resized: y_unet at
// the U-Net input scale, y_aux at the DAE concat scale (empty when unused).
struct Dataset {
    std::vector<Tensor> x;
    std::vector<Tensor> y_unet;
    std::vector<Tensor> y_aux;

    std::size_t size() const { return x.size(); }

    void validate(bool needs_aux) const {
        if (x.empty()) throw Error("Dataset: empty");
        if (y_unet.size() != x.size() || (needs_aux && y_aux.size() != x.size()))
            throw Error("Dataset: mismatched pair lists");
    }
};

// Batch index selection at iteration t: a seeded shuffle of [0, N), first B
// entries (wrapping when B > N). Stateless in t, so resumed runs reproduce
// the uninterrupted batch sequence exactly.
inline std::vector<std::size_t> batch_indices(std::uint64_t seed, std::int64_t iteration,
                                              std::size_t dataset_size, std::int64_t batch) {
    std::vector<std::size_t> perm(dataset_size);
    for (std::size_t i = 0; i < dataset_size; ++i) perm[i] = i;
    Rng rng(mix_seed(seed, 0xBA7C000000000000ULL + static_cast<std::uint64_t>(iteration)));
    rng.shuffle(perm);
    std::vector<std::size_t> out(static_cast<std::size_t>(batch));
    for (std::int64_t i = 0; i < batch; ++i)
        out[static_cast<std::size_t>(i)] = perm[static_cast<std::size_t>(i) % dataset_size];
    return out;
}

inline Tensor stack_rows(const std::vector<Tensor>& pool, const std::vector<std::size_t>& idx) {
    const Shape one = pool[idx[0]].shape();
    Tensor out(Shape{static_cast<std::int64_t>(idx.size()), one.h, one.w, one.c});
    const std::int64_t row = one.count();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Tensor& src = pool[idx[i]];
        src.ensure_shape(one, "stack_rows");
        std::copy(src.data(), src.data() + row, out.data() + static_cast<std::int64_t>(i) * row);
    }
    return out;
}

struct TraceRow {
    std::int64_t iter = 0;
    double loss_d = 0.0, loss_g_z = 0.0, loss_g_xhat = 0.0;
    double psnr_z = 0.0, psnr_xhat = 0.0, var_x_minus_z = 0.0;
};

using CheckpointFn = std::function<void(TrainingState&)>;

// Runs until st.iteration == iters. checkpoint_every = 0 disables periodic
// checkpoints; the callback (when given) also fires after the final step.
inline std::vector<TraceRow> train_loop(TrainingState& st, const Dataset& data,
                                        std::int64_t iters, std::int64_t checkpoint_every = 0,
                                        const CheckpointFn& checkpoint = {}) {
    const bool needs_aux = st.dae.aux_shape().has_value();
    data.validate(needs_aux);
    std::vector<TraceRow> trace;
    while (st.iteration < iters) {
        const std::int64_t t = st.iteration + 1;
        const auto idx = batch_indices(st.seed, t, data.size(), st.hp.batch_size);
        const Tensor bx = stack_rows(data.x, idx);
        const Tensor by = stack_rows(data.y_unet, idx);
        Tensor baux;
        if (needs_aux) baux = stack_rows(data.y_aux, idx);
        const StepMetrics m = train_step(st, bx, by, needs_aux ? &baux : nullptr);
        trace.push_back({t, m.loss_d, m.loss_g_z, m.loss_g_xhat, m.psnr_z, m.psnr_xhat,
                         m.var_x_minus_z});
        if (checkpoint && checkpoint_every > 0 && t % checkpoint_every == 0) checkpoint(st);
    }
    if (checkpoint) checkpoint(st);
    return trace;
}

}  // namespace inversenet

#endif  // INVERSENET_TRAINING_HPP
