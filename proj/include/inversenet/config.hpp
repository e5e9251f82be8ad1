#ifndef INVERSENET_CONFIG_HPP
#define INVERSENET_CONFIG_HPP

#include <json.hpp>

#include "inversenet/checkpoint.hpp"
#include "inversenet/operators.hpp"
#include "inversenet/solvers.hpp"
#include "inversenet/training.hpp"

// Experiment definition: one JSON file fully determines a run (kernels come
// from seeds, not from pixel data).

namespace inversenet {

enum class Task { Deblur, Sr4, JointSr2Color };

inline Task task_from_string(const std::string& s) {
    if (s == "deblur") return Task::Deblur;
    if (s == "sr4") return Task::Sr4;
    if (s == "joint_sr2_color") return Task::JointSr2Color;
    throw Error("unknown task '" + s + "' (expected deblur | sr4 | joint_sr2_color)");
}

inline std::string task_to_string(Task t) {
    switch (t) {
        case Task::Deblur: return "deblur";
        case Task::Sr4: return "sr4";
        case Task::JointSr2Color: return "joint_sr2_color";
    }
    return "?";
}

struct OperatorSpec {
    KernelKind kind = KernelKind::Gaussian;
    std::int64_t size = 3;
    double sigma = 1.0;
    double length = 5.0;
    std::optional<double> angle_deg;
    std::uint64_t seed = 0;

    Kernel2D make(bool per_channel, std::int64_t channels) const {
        KernelParams p;
        p.sigma = sigma;
        p.length = length;
        p.angle_deg = angle_deg;
        if (!per_channel) return make_kernel(kind, size, p, seed);
        std::vector<Kernel2D> parts;
        for (std::int64_t c = 0; c < channels; ++c) {
            KernelParams pc = p;
            if (pc.angle_deg.has_value()) *pc.angle_deg += 25.0 * static_cast<double>(c);
            if (kind == KernelKind::Gaussian) pc.sigma = sigma * (1.0 + 0.25 * static_cast<double>(c));
            parts.push_back(make_kernel(kind, size, pc, mix_seed(seed, static_cast<std::uint64_t>(c))));
        }
        return stack_kernels(parts);
    }
};

struct ExperimentConfig {
    Task task = Task::Deblur;
    std::uint64_t seed = 42;

    std::int64_t image_size = 32;
    std::int64_t image_channels = 3;

    OperatorSpec op;

    std::vector<std::int64_t> unet_filters = {16, 32};
    double unet_leak = 0.2;

    std::int64_t dae_r = 2;
    std::vector<std::int64_t> dae_pre = {32, 16, 8};
    std::vector<std::int64_t> dae_post = {16, 32};
    bool dae_concat_y = true;

    std::int64_t comparator_features = 64;
    std::uint64_t comparator_seed = 7;
    std::string comparator_weights;  // optional checkpoint dir with comp/ tensors

    TrainHyperparams hp;
    std::int64_t train_iters = 2000;
    std::int64_t checkpoint_every = 500;

    ADMMConfig admm;
    WienerConfig wiener;

    std::string data_dir, out_dir, checkpoint_dir;

    std::string canonical_json() const;
    std::string hash() const { return fnv1a_hex(canonical_json()); }

    // task-derived geometry
    std::int64_t downsample() const {
        switch (task) {
            case Task::Deblur: return 1;
            case Task::Sr4: return 4;
            case Task::JointSr2Color: return 2;
        }
        return 1;
    }
    std::int64_t y_channels() const { return task == Task::JointSr2Color ? 1 : image_channels; }
    Shape x_shape() const { return Shape{1, image_size, image_size, image_channels}; }
    Shape y_shape() const {
        const std::int64_t d = downsample();
        return Shape{1, image_size / d, image_size / d, y_channels()};
    }
    Preprocess preprocess() const {
        return task == Task::Deblur ? Preprocess::None : Preprocess::Bicubic;
    }

    OperatorPtr make_operator() const {
        const Shape img = x_shape();
        switch (task) {
            case Task::Deblur:
                return std::make_shared<MotionBlurPeriodic>(op.make(false, image_channels), img);
            case Task::Sr4:
                return std::make_shared<StridedConvDown>(op.make(false, image_channels), 4, img);
            case Task::JointSr2Color: {
                std::vector<OperatorPtr> stages;
                stages.push_back(std::make_shared<MotionBlurPeriodic>(
                    op.make(true, image_channels), img));
                stages.push_back(std::make_shared<SpectralAverage>(img));
                stages.push_back(std::make_shared<StridedConvDown>(
                    Kernel2D::delta(1), 2, Shape{img.n, img.h, img.w, 1}));
                return std::make_shared<CompositeOperator>(std::move(stages));
            }
        }
        throw Error("make_operator: bad task");
    }

    UNetConfig unet_config() const {
        UNetConfig c;
        c.size = image_size;
        c.in_channels = y_channels();
        c.out_channels = image_channels;
        c.filters = unet_filters;
        c.leak = unet_leak;
        return c;
    }

    DAEConfig dae_config() const {
        DAEConfig c;
        c.size = image_size;
        c.r = dae_r;
        c.in_channels = image_channels;
        c.aux_channels = y_channels();
        c.pre_channels = dae_pre;
        c.post_channels = dae_post;
        c.concat_y = dae_concat_y;
        return c;
    }

    ComparatorConfig comparator_config() const {
        ComparatorConfig c;
        c.size = image_size;
        c.in_channels = image_channels;
        c.features = comparator_features;
        return c;
    }

    void validate() const {
        hp.validate();
        admm.validate();
        unet_config().validate();
        dae_config().validate();
        comparator_config().validate();
        if (image_size % downsample() != 0)
            throw Error("ExperimentConfig: image size not divisible by the task downsample");
        if (task == Task::JointSr2Color && image_channels != 3)
            throw Error("ExperimentConfig: joint task needs 3-channel images");
    }
};

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig c;
    c.task = task_from_string(detail::get_or<std::string>(j, "task", "deblur"));
    c.seed = detail::get_or<std::uint64_t>(j, "seed", 42);

    if (j.contains("image")) {
        const auto& im = j.at("image");
        c.image_size = detail::get_or<std::int64_t>(im, "size", c.image_size);
        c.image_channels = detail::get_or<std::int64_t>(im, "channels", c.image_channels);
    }
    if (j.contains("operator")) {
        const auto& op = j.at("operator");
        if (op.contains("kernel")) {
            const auto& k = op.at("kernel");
            c.op.kind = kernel_kind_from_string(detail::get_or<std::string>(k, "kind", "gaussian"));
            c.op.size = detail::get_or<std::int64_t>(k, "size", c.op.size);
            c.op.sigma = detail::get_or<double>(k, "sigma", c.op.sigma);
            c.op.length = detail::get_or<double>(k, "length", c.op.length);
            if (k.contains("angle_deg")) c.op.angle_deg = k.at("angle_deg").get<double>();
            c.op.seed = detail::get_or<std::uint64_t>(k, "seed", c.seed);
        }
    } else {
        c.op.seed = c.seed;
    }
    if (j.contains("unet")) {
        const auto& u = j.at("unet");
        c.unet_filters = detail::get_or<std::vector<std::int64_t>>(u, "filters", c.unet_filters);
        c.unet_leak = detail::get_or<double>(u, "leak", c.unet_leak);
    }
    if (j.contains("dae")) {
        const auto& d = j.at("dae");
        c.dae_r = detail::get_or<std::int64_t>(d, "r", c.dae_r);
        c.dae_pre = detail::get_or<std::vector<std::int64_t>>(d, "pre_channels", c.dae_pre);
        c.dae_post = detail::get_or<std::vector<std::int64_t>>(d, "post_channels", c.dae_post);
        c.dae_concat_y = detail::get_or<bool>(d, "concat_y", c.dae_concat_y);
    }
    if (j.contains("comparator")) {
        const auto& cm = j.at("comparator");
        c.comparator_features =
            detail::get_or<std::int64_t>(cm, "features", c.comparator_features);
        c.comparator_seed = detail::get_or<std::uint64_t>(cm, "seed", c.comparator_seed);
        c.comparator_weights = detail::get_or<std::string>(cm, "weights", "");
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        c.hp.adam.lr = detail::get_or<double>(t, "lr", c.hp.adam.lr);
        c.hp.adam.beta1 = detail::get_or<double>(t, "beta1", c.hp.adam.beta1);
        c.hp.adam.beta2 = detail::get_or<double>(t, "beta2", c.hp.adam.beta2);
        c.hp.adam.eps = detail::get_or<double>(t, "eps", c.hp.adam.eps);
        c.hp.clip_norm = detail::get_or<double>(t, "clip_norm", c.hp.clip_norm);
        c.hp.k_disc = detail::get_or<int>(t, "k_disc", c.hp.k_disc);
        c.hp.batch_size = detail::get_or<std::int64_t>(t, "batch_size", c.hp.batch_size);
        c.hp.weights.lambda_r = detail::get_or<double>(t, "lambda_r", c.hp.weights.lambda_r);
        c.hp.weights.lambda_f = detail::get_or<double>(t, "lambda_f", c.hp.weights.lambda_f);
        c.train_iters = detail::get_or<std::int64_t>(t, "iters", c.train_iters);
        c.checkpoint_every = detail::get_or<std::int64_t>(t, "checkpoint_every", c.checkpoint_every);
    }
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        c.admm.beta = detail::get_or<double>(s, "beta", c.admm.beta);
        c.admm.lambda = detail::get_or<double>(s, "lambda", c.admm.lambda);
        const std::string prox = detail::get_or<std::string>(s, "prox", "identity");
        if (prox == "identity")
            c.admm.prox = ProxKind::Identity;
        else if (prox == "l1")
            c.admm.prox = ProxKind::L1;
        else
            throw Error("config: unknown prox '" + prox + "'");
        const std::string zs = detail::get_or<std::string>(s, "z_solver", "fourier");
        if (zs == "fourier")
            c.admm.z_solver = ZSolver::FourierClosedForm;
        else if (zs == "cg")
            c.admm.z_solver = ZSolver::ConjugateGradient;
        else
            throw Error("config: unknown z_solver '" + zs + "'");
        c.admm.max_iter = detail::get_or<int>(s, "max_iter", c.admm.max_iter);
        c.admm.tol_primal = detail::get_or<double>(s, "tol_primal", c.admm.tol_primal);
        c.admm.cg_max_iter = detail::get_or<int>(s, "cg_max_iter", c.admm.cg_max_iter);
        c.admm.cg_tol = detail::get_or<double>(s, "cg_tol", c.admm.cg_tol);
        c.wiener.k_reg = detail::get_or<double>(s, "wiener_k_reg", c.wiener.k_reg);
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        c.data_dir = detail::get_or<std::string>(p, "data_dir", "");
        c.out_dir = detail::get_or<std::string>(p, "out_dir", "");
        c.checkpoint_dir = detail::get_or<std::string>(p, "checkpoint_dir", "");
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw Error("config: '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

// Canonical text for hashing: plain JSON with sorted keys, paths excluded
// (moving an experiment between directories must not invalidate resumes).
inline std::string ExperimentConfig::canonical_json() const {
    nlohmann::json j;
    j["task"] = task_to_string(task);
    j["seed"] = seed;
    j["image"] = {{"size", image_size}, {"channels", image_channels}};
    nlohmann::json k;
    k["kind"] = op.kind == KernelKind::Flat ? "flat"
              : op.kind == KernelKind::Gaussian ? "gaussian"
                                                : "linear_motion";
    k["size"] = op.size;
    k["sigma"] = op.sigma;
    k["length"] = op.length;
    if (op.angle_deg.has_value()) k["angle_deg"] = *op.angle_deg;
    k["seed"] = op.seed;
    j["operator"] = {{"kernel", k}};
    j["unet"] = {{"filters", unet_filters}, {"leak", unet_leak}};
    j["dae"] = {{"r", dae_r},
                {"pre_channels", dae_pre},
                {"post_channels", dae_post},
                {"concat_y", dae_concat_y}};
    j["comparator"] = {{"features", comparator_features},
                       {"seed", comparator_seed},
                       {"weights", comparator_weights}};
    // run control (iters, checkpoint_every, paths) stays out of the hash:
    // extending a run or moving it on disk is still the same experiment
    j["train"] = {{"lr", hp.adam.lr},
                  {"beta1", hp.adam.beta1},
                  {"beta2", hp.adam.beta2},
                  {"eps", hp.adam.eps},
                  {"clip_norm", hp.clip_norm},
                  {"k_disc", hp.k_disc},
                  {"batch_size", hp.batch_size},
                  {"lambda_r", hp.weights.lambda_r},
                  {"lambda_f", hp.weights.lambda_f}};
    return j.dump();
}

// ----- TrainingState <-> checkpoint plumbing -----

inline TrainingState build_training_state(const ExperimentConfig& cfg) {
    cfg.validate();
    TrainingState st;
    st.unet = build_unet(cfg.unet_config(), mix_seed(cfg.seed, 0x0E7));
    st.dae = build_dae(cfg.dae_config(), mix_seed(cfg.seed, 0xDAE));
    st.disc = build_discriminator(cfg.image_size, cfg.image_channels, mix_seed(cfg.seed, 0xD15C));
    st.comparator = build_comparator(cfg.comparator_config(), cfg.comparator_seed);
    if (!cfg.comparator_weights.empty()) {
        std::vector<std::pair<std::string, Tensor*>> refs;
        for (auto& p : st.comparator.net.state_tensors())
            refs.emplace_back("comp/" + p.name, p.tensor);
        load_checkpoint(cfg.comparator_weights, refs);
        st.comparator.provenance = "external(" + cfg.comparator_weights + ")";
    }
    st.seed = cfg.seed;
    st.hp = cfg.hp;
    st.init_optimizers();
    return st;
}

namespace detail {

inline void collect_state(TrainingState& st,
                          std::vector<std::pair<std::string, Tensor*>>& out) {
    const auto add_net = [&](const char* prefix, Graph& g) {
        for (auto& p : g.state_tensors()) out.emplace_back(std::string(prefix) + p.name, p.tensor);
    };
    add_net("unet/", st.unet);
    add_net("dae/", st.dae);
    add_net("disc/", st.disc);
    add_net("comp/", st.comparator.net);
    const auto add_opt = [&](const char* prefix, Graph& g, AdamState& opt) {
        auto params = g.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            out.emplace_back(std::string(prefix) + params[i].name + "/m", &opt.m[i]);
            out.emplace_back(std::string(prefix) + params[i].name + "/v", &opt.v[i]);
        }
    };
    add_opt("opt_unet/", st.unet, st.opt_unet);
    add_opt("opt_dae/", st.dae, st.opt_dae);
    add_opt("opt_disc/", st.disc, st.opt_disc);
}

}  // namespace detail

inline void save_training_state(const std::string& dir, const ExperimentConfig& cfg,
                                TrainingState& st) {
    CheckpointMeta meta;
    meta.config_hash = cfg.hash();
    meta.iteration = st.iteration;
    meta.seed = st.seed;
    meta.scalars["opt_unet_step"] = st.opt_unet.step;
    meta.scalars["opt_dae_step"] = st.opt_dae.step;
    meta.scalars["opt_disc_step"] = st.opt_disc.step;
    std::vector<std::pair<std::string, Tensor*>> refs;
    detail::collect_state(st, refs);
    std::vector<std::pair<std::string, const Tensor*>> cref(refs.begin(), refs.end());
    save_checkpoint(dir, meta, cref);
}

// Rebuilds the state from config + checkpoint; refuses on config-hash
// mismatch.
inline TrainingState load_training_state(const std::string& dir, const ExperimentConfig& cfg) {
    const CheckpointMeta meta = read_checkpoint_meta(dir);
    if (meta.config_hash != cfg.hash())
        throw Error("checkpoint '" + dir + "' was written for config hash " + meta.config_hash +
                    ", but the current config hashes to " + cfg.hash() + "; refusing to resume");
    TrainingState st = build_training_state(cfg);
    std::vector<std::pair<std::string, Tensor*>> refs;
    detail::collect_state(st, refs);
    load_checkpoint(dir, refs);
    st.iteration = meta.iteration;
    st.seed = meta.seed;
    st.opt_unet.step = meta.scalars.at("opt_unet_step");
    st.opt_dae.step = meta.scalars.at("opt_dae_step");
    st.opt_disc.step = meta.scalars.at("opt_disc_step");
    return st;
}

}  // namespace inversenet

#endif  // INVERSENET_CONFIG_HPP
