// Experiment front end: dataset degradation, classical solves, adversarial
// training, inference, and evaluation. One JSON config file defines an
// experiment; see README.md for the schema.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "inversenet/config.hpp"
#include "inversenet/gradcheck.hpp"
#include "inversenet/image_io.hpp"
#include "inversenet/metrics.hpp"

namespace fs = std::filesystem;
using namespace inversenet;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("'" + dir.string() + "' is not a directory");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

fs::path resolve_y_dir(const fs::path& data_dir) {
    if (fs::is_directory(data_dir / "y")) return data_dir / "y";
    return data_dir;
}

Kernel2D experiment_kernel(const ExperimentConfig& cfg) {
    return cfg.op.make(cfg.task == Task::JointSr2Color, cfg.image_channels);
}

OperatorPtr operator_from_kernel(const ExperimentConfig& cfg, const Kernel2D& k) {
    const Shape img = cfg.x_shape();
    switch (cfg.task) {
        case Task::Deblur:
            return std::make_shared<MotionBlurPeriodic>(k, img);
        case Task::Sr4:
            return std::make_shared<StridedConvDown>(k, 4, img);
        case Task::JointSr2Color: {
            std::vector<OperatorPtr> stages;
            stages.push_back(std::make_shared<MotionBlurPeriodic>(k, img));
            stages.push_back(std::make_shared<SpectralAverage>(img));
            stages.push_back(std::make_shared<StridedConvDown>(Kernel2D::delta(1), 2,
                                                               Shape{img.n, img.h, img.w, 1}));
            return std::make_shared<CompositeOperator>(std::move(stages));
        }
    }
    throw Error("bad task");
}

// Ingests an arbitrary PNG as a ground-truth image for the experiment:
// channel-adapted and bicubic-resized to the configured square size.
Tensor ingest_ground_truth(const fs::path& file, const ExperimentConfig& cfg) {
    Tensor img = adapt_channels(read_png(file.string()), cfg.image_channels);
    if (img.shape().h != cfg.image_size || img.shape().w != cfg.image_size)
        img = bicubic_resize(img, cfg.image_size, cfg.image_size);
    for (std::int64_t i = 0; i < img.size(); ++i)
        img[i] = std::min(1.0, std::max(0.0, img[i]));
    return img;
}

int cmd_degrade(const ExperimentConfig& cfg, const std::string& out_override) {
    const fs::path out = out_override.empty() ? cfg.out_dir : out_override;
    if (out.empty()) throw Error("degrade: no output directory (--out or paths.out_dir)");
    if (cfg.data_dir.empty()) throw Error("degrade: paths.data_dir must point at input PNGs");
    fs::create_directories(out / "x");
    fs::create_directories(out / "y");

    const Kernel2D k = experiment_kernel(cfg);
    save_kernel((out / "kernel.txt").string(), k);
    const OperatorPtr A = operator_from_kernel(cfg, k);

    std::size_t ok = 0, failed = 0;
    for (const fs::path& file : list_pngs(cfg.data_dir)) {
        try {
            const Tensor x = ingest_ground_truth(file, cfg);
            const Tensor y = A->forward(x);
            write_png((out / "x" / file.filename()).string(), x);
            write_png((out / "y" / file.filename()).string(), y);
            ++ok;
        } catch (const std::exception& e) {
            std::cerr << file.filename().string() << ": " << e.what() << "\n";
            ++failed;
        }
    }
    std::cout << "degraded " << ok << " images (" << failed << " failed) into " << out.string()
              << "\n";
    return ok > 0 ? 0 : 1;
}

void write_metrics_csv(const fs::path& path,
                       const std::vector<std::tuple<std::string, double, double>>& rows) {
    std::ofstream f(path);
    f << "file,psnr,ssim\n";
    double sp = 0.0, ss = 0.0;
    for (const auto& [name, p, s] : rows) {
        f << name << "," << fmt(p) << "," << fmt(s) << "\n";
        sp += p;
        ss += s;
    }
    if (!rows.empty())
        f << "mean," << fmt(sp / static_cast<double>(rows.size())) << ","
          << fmt(ss / static_cast<double>(rows.size())) << "\n";
}

int cmd_solve(const ExperimentConfig& cfg, const std::string& method,
              const std::string& out_override, const std::string& kernel_override) {
    const fs::path out = out_override.empty() ? cfg.out_dir : out_override;
    if (out.empty()) throw Error("solve: no output directory (--out or paths.out_dir)");
    fs::create_directories(out / "restored");

    fs::path kernel_path = kernel_override;
    if (kernel_path.empty()) kernel_path = fs::path(cfg.data_dir) / "kernel.txt";
    if (!fs::exists(kernel_path))
        throw Error("solve: kernel file '" + kernel_path.string() +
                    "' not found (run degrade first or pass --kernel)");
    const Kernel2D k = load_kernel(kernel_path.string());
    const OperatorPtr A = operator_from_kernel(cfg, k);

    const fs::path y_dir = resolve_y_dir(cfg.data_dir);
    const fs::path x_dir = fs::path(cfg.data_dir) / "x";
    const bool have_gt = fs::is_directory(x_dir);

    std::vector<std::tuple<std::string, double, double>> rows;
    for (const fs::path& file : list_pngs(y_dir)) {
        const Tensor y = read_png(file.string());
        Tensor xhat;
        if (method == "wiener") {
            if (cfg.task != Task::Deblur)
                throw Error("solve: the wiener method applies to the deblur task only");
            xhat = wiener_deconvolve(y, k, cfg.wiener);
        } else if (method == "admm") {
            y.ensure_shape(A->output_shape(), "solve: measurement");
            const ADMMResult r = admm_solve(y, *A, cfg.admm);
            xhat = r.x;
            std::ofstream tf(out / ("trace_" + file.stem().string() + ".csv"));
            tf << "iteration,primal_residual,objective\n";
            for (const ADMMTraceRow& row : r.trace)
                tf << row.iteration << "," << fmt(row.primal_residual) << ","
                   << fmt(row.objective) << "\n";
        } else {
            throw Error("solve: unknown method '" + method + "' (wiener | admm)");
        }
        for (std::int64_t i = 0; i < xhat.size(); ++i)
            xhat[i] = std::min(1.0, std::max(0.0, xhat[i]));
        write_png((out / "restored" / file.filename()).string(), xhat);

        if (have_gt && fs::exists(x_dir / file.filename())) {
            const Tensor x = read_png((x_dir / file.filename()).string());
            rows.emplace_back(file.filename().string(), psnr(xhat, x).db, ssim(xhat, x));
        }
    }
    if (!rows.empty()) {
        write_metrics_csv(out / "metrics.csv", rows);
        std::cout << "metrics written to " << (out / "metrics.csv").string() << "\n";
    }
    std::cout << "restored images in " << (out / "restored").string() << "\n";
    return 0;
}

Dataset load_dataset(const ExperimentConfig& cfg) {
    const fs::path x_dir = fs::path(cfg.data_dir) / "x";
    const fs::path y_dir = fs::path(cfg.data_dir) / "y";
    if (!fs::is_directory(x_dir) || !fs::is_directory(y_dir))
        throw Error("train: '" + cfg.data_dir + "' must contain x/ and y/ (run degrade first)");
    Dataset d;
    const bool needs_aux = cfg.dae_concat_y;
    for (const fs::path& file : list_pngs(x_dir)) {
        const fs::path ypath = y_dir / file.filename();
        if (!fs::exists(ypath)) throw Error("train: no measurement for " + file.filename().string());
        const Tensor x01 = adapt_channels(read_png(file.string()), cfg.image_channels);
        x01.ensure_shape(cfg.x_shape(), "train: ground truth " + file.filename().string());
        const Tensor y01 = adapt_channels(read_png(ypath.string()), cfg.y_channels());
        y01.ensure_shape(cfg.y_shape(), "train: measurement " + file.filename().string());
        const Tensor x = to_signed_range(x01);
        const Tensor y = to_signed_range(y01);
        d.x.push_back(x);
        d.y_unet.push_back(cfg.preprocess() == Preprocess::Bicubic
                               ? bicubic_resize(y, cfg.image_size, cfg.image_size)
                               : y);
        if (needs_aux)
            d.y_aux.push_back(bicubic_resize(y, cfg.image_size / cfg.dae_r,
                                             cfg.image_size / cfg.dae_r));
    }
    return d;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& resume_dir,
              const std::string& out_override) {
    const fs::path out = out_override.empty() ? cfg.out_dir : out_override;
    if (out.empty()) throw Error("train: no output directory (--out or paths.out_dir)");
    fs::create_directories(out);
    const fs::path ckpt_dir =
        cfg.checkpoint_dir.empty() ? out / "checkpoint" : fs::path(cfg.checkpoint_dir);

    TrainingState st = resume_dir.empty() ? build_training_state(cfg)
                                          : load_training_state(resume_dir, cfg);
    const Dataset data = load_dataset(cfg);

    if (resume_dir.empty()) save_training_state(ckpt_dir.string(), cfg, st);  // iteration 0

    const fs::path trace_path = out / "trace.csv";
    const bool fresh_trace = !fs::exists(trace_path) || resume_dir.empty();
    std::ofstream trace(trace_path, fresh_trace ? std::ios::trunc : std::ios::app);
    if (fresh_trace) trace << "iter,L_D,L_G_z,L_G_xhat,psnr_z,psnr_xhat,var_x_minus_z\n";

    const auto checkpoint = [&](TrainingState& s) {
        save_training_state(ckpt_dir.string(), cfg, s);
    };
    const auto rows =
        train_loop(st, data, cfg.train_iters, cfg.checkpoint_every, checkpoint);
    for (const TraceRow& r : rows)
        trace << r.iter << "," << fmt(r.loss_d) << "," << fmt(r.loss_g_z) << ","
              << fmt(r.loss_g_xhat) << "," << fmt(r.psnr_z) << "," << fmt(r.psnr_xhat) << ","
              << fmt(r.var_x_minus_z) << "\n";
    std::cout << "trained to iteration " << st.iteration << "; checkpoint in "
              << ckpt_dir.string() << ", trace in " << trace_path.string() << "\n";
    return 0;
}

int cmd_infer(const ExperimentConfig& cfg, const std::string& checkpoint_dir,
              const std::string& out_override) {
    if (checkpoint_dir.empty()) throw Error("infer: --checkpoint is required");
    const fs::path out = out_override.empty() ? cfg.out_dir : out_override;
    if (out.empty()) throw Error("infer: no output directory (--out or paths.out_dir)");
    fs::create_directories(out / "z");
    fs::create_directories(out / "xhat");

    TrainingState st = load_training_state(checkpoint_dir, cfg);
    const Shape want = cfg.y_shape();

    std::size_t ok = 0, failed = 0;
    for (const fs::path& file : list_pngs(resolve_y_dir(cfg.data_dir))) {
        try {
            const Tensor y01 = adapt_channels(read_png(file.string()), cfg.y_channels());
            if (y01.shape().h != want.h || y01.shape().w != want.w)
                throw Error("expected a " + std::to_string(want.h) + "x" + std::to_string(want.w) +
                            " measurement, got " + std::to_string(y01.shape().h) + "x" +
                            std::to_string(y01.shape().w));
            const PipelineResult r = inversenet_forward(st.unet, st.dae, to_signed_range(y01),
                                                        cfg.preprocess(), /*train=*/false);
            write_png((out / "z" / file.filename()).string(), to_unit_range(r.z));
            write_png((out / "xhat" / file.filename()).string(), to_unit_range(r.x_hat));
            ++ok;
        } catch (const std::exception& e) {
            std::cerr << file.filename().string() << ": " << e.what() << "\n";
            ++failed;
        }
    }
    std::cout << "inferred " << ok << " images (" << failed << " failed) into " << out.string()
              << "\n";
    return ok > 0 ? 0 : 1;
}

int cmd_eval(const std::string& restored_dir, const std::string& reference_dir,
             const std::string& out_csv) {
    const auto restored = list_pngs(restored_dir);
    const auto reference = list_pngs(reference_dir);
    std::vector<std::string> ra, rb;
    for (const auto& p : restored) ra.push_back(p.filename().string());
    for (const auto& p : reference) rb.push_back(p.filename().string());
    if (ra != rb) {
        std::string diff;
        for (const auto& n : ra)
            if (std::find(rb.begin(), rb.end(), n) == rb.end()) diff += " +" + n;
        for (const auto& n : rb)
            if (std::find(ra.begin(), ra.end(), n) == ra.end()) diff += " -" + n;
        throw Error("eval: file name sets differ:" + diff);
    }
    std::vector<std::tuple<std::string, double, double>> rows;
    for (std::size_t i = 0; i < restored.size(); ++i) {
        const Tensor a = read_png(restored[i].string());
        const Tensor b = read_png(reference[i].string());
        rows.emplace_back(ra[i], psnr(a, b).db, ssim(a, b));
    }
    if (!out_csv.empty()) write_metrics_csv(out_csv, rows);
    double sp = 0.0, ss = 0.0;
    for (const auto& [n, p, s] : rows) {
        std::cout << n << " psnr " << fmt(p) << " ssim " << fmt(s) << "\n";
        sp += p;
        ss += s;
    }
    if (!rows.empty())
        std::cout << "mean psnr " << fmt(sp / static_cast<double>(rows.size())) << " ssim "
                  << fmt(ss / static_cast<double>(rows.size())) << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    namespace L = layers;
    int failures = 0;
    const auto report = [&](const std::string& name, double err, double tol) {
        const bool pass = err < tol;
        if (!pass) ++failures;
        std::cout << (pass ? "PASS" : "FAIL") << " " << name << "  max_rel_err=" << fmt(err)
                  << " (tol " << fmt(tol) << ")\n";
    };
    const auto rnd = [&](Shape s, std::uint64_t salt) {
        Tensor t(s);
        Rng rng(mix_seed(seed, salt));
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
        return t;
    };
    const auto spread = [](Graph& g) {
        for (auto& p : g.params())
            if (p.name.find("/weight") != std::string::npos)
                for (std::int64_t i = 0; i < p.tensor->size(); ++i) (*p.tensor)[i] *= 10.0;
    };

    struct Case {
        const char* label;
        std::vector<LayerSpec> spec;
        Shape in;
    };
    const std::vector<Case> cases = {
        {"conv", {L::conv(3, 3, 2, 3, 1)}, Shape{2, 5, 5, 2}},
        {"conv_stride2", {L::conv(4, 4, 2, 3, 2)}, Shape{1, 6, 6, 2}},
        {"conv_transpose", {L::conv_transpose(4, 4, 3, 2, 2)}, Shape{1, 4, 4, 3}},
        {"batch_norm", {L::batch_norm()}, Shape{2, 3, 3, 2}},
        {"leaky_relu", {L::leaky_relu(0.2)}, Shape{1, 4, 4, 3}},
        {"relu", {L::relu()}, Shape{1, 4, 4, 3}},
        {"tanh", {L::tanh()}, Shape{1, 4, 4, 3}},
        {"sigmoid", {L::sigmoid()}, Shape{1, 4, 4, 3}},
        {"dense", {L::dense(5)}, Shape{2, 3, 3, 2}},
        {"concat", {L::relu(), L::concat("input")}, Shape{1, 3, 3, 2}},
        {"pixel_unshuffle", {L::pixel_unshuffle(2)}, Shape{1, 4, 4, 3}},
        {"pixel_shuffle", {L::pixel_shuffle(2)}, Shape{1, 3, 3, 8}},
    };
    for (const Case& c : cases) {
        Graph g = Graph::compile(c.spec, c.in, mix_seed(seed, 100));
        report(std::string("layer ") + c.label,
               gradient_check(g, rnd(c.in, 1), nullptr, GradCheckLoss::WeightedSum, 1e-5), 1e-4);
    }

    UNetConfig ucfg;
    ucfg.size = 16;
    ucfg.in_channels = 1;
    ucfg.out_channels = 1;
    ucfg.filters = {4, 6};
    Graph unet = build_unet(ucfg, mix_seed(seed, 2));
    spread(unet);
    report("tiny u-net", gradient_check(unet, rnd(Shape{1, 16, 16, 1}, 3), nullptr,
                                        GradCheckLoss::WeightedSum, 1e-5),
           1e-4);

    DAEConfig dcfg;
    dcfg.size = 8;
    dcfg.r = 2;
    dcfg.in_channels = 1;
    dcfg.aux_channels = 1;
    dcfg.pre_channels = {6};
    dcfg.post_channels = {6};
    Graph dae = build_dae(dcfg, mix_seed(seed, 4));
    spread(dae);
    const Tensor aux = rnd(Shape{1, 4, 4, 1}, 5);
    report("tiny dae", gradient_check(dae, rnd(Shape{1, 8, 8, 1}, 6), &aux,
                                      GradCheckLoss::WeightedSum, 1e-5),
           1e-4);

    Graph disc = build_discriminator(8, 1, mix_seed(seed, 7));
    spread(disc);
    report("tiny discriminator", gradient_check(disc, rnd(Shape{1, 8, 8, 1}, 8), nullptr,
                                                GradCheckLoss::WeightedSum, 1e-5),
           1e-4);

    std::cout << (failures == 0 ? "gradcheck: all checks passed\n"
                                : "gradcheck: FAILURES present\n");
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"splitting-network toolkit for linear inverse problems"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint_dir, method, kernel_path, eval_csv;
    std::string eval_restored, eval_reference;
    std::uint64_t seed_override = 0;
    bool seed_given = false;

    const auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* opt = cmd->add_option("--config", config_path, "experiment config JSON");
        if (needs_config) opt->required();
        cmd->add_option("--seed", seed_override, "override the experiment seed")
            ->each([&](const std::string&) { seed_given = true; });
        cmd->add_option("--out", out_dir, "output directory");
    };

    auto* degrade = app.add_subcommand("degrade", "generate (x, y) pairs with the forward model");
    add_common(degrade, true);
    auto* solve = app.add_subcommand("solve", "classical restoration (wiener | admm)");
    add_common(solve, true);
    solve->add_option("--method", method, "wiener | admm")->required();
    solve->add_option("--kernel", kernel_path, "kernel file (defaults to data_dir/kernel.txt)");
    auto* train = app.add_subcommand("train", "joint adversarial training");
    add_common(train, true);
    train->add_option("--checkpoint", checkpoint_dir, "resume from this checkpoint directory");
    auto* infer = app.add_subcommand("infer", "feed-forward restoration from a checkpoint");
    add_common(infer, true);
    infer->add_option("--checkpoint", checkpoint_dir, "trained checkpoint directory")->required();
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM between two image directories");
    eval->add_option("restored", eval_restored, "restored image directory")->required();
    eval->add_option("reference", eval_reference, "reference image directory")->required();
    eval->add_option("--out", eval_csv, "write per-image metrics CSV here");
    auto* gradcheck = app.add_subcommand("gradcheck", "run the gradient oracles and report");
    gradcheck->add_option("--seed", seed_override, "rng seed for the checks")
        ->each([&](const std::string&) { seed_given = true; });

    CLI11_PARSE(app, argc, argv);

    try {
        if (gradcheck->parsed()) return cmd_gradcheck(seed_given ? seed_override : 12345);
        if (eval->parsed()) return cmd_eval(eval_restored, eval_reference, eval_csv);

        ExperimentConfig cfg = load_config(config_path);
        if (seed_given) {
            cfg.seed = seed_override;
            cfg.op.seed = seed_override;
        }
        if (degrade->parsed()) return cmd_degrade(cfg, out_dir);
        if (solve->parsed()) return cmd_solve(cfg, method, out_dir, kernel_path);
        if (train->parsed()) return cmd_train(cfg, checkpoint_dir, out_dir);
        if (infer->parsed()) return cmd_infer(cfg, checkpoint_dir, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
