#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "inversenet/image_io.hpp"
#include "inversenet/rng.hpp"

// End-to-end checks of the command-line surface; each command runs as a real
// subprocess against a scratch directory.

using namespace inversenet;
namespace fs = std::filesystem;

namespace {

const char* kCli = INVERSENET_CLI;

int run(const std::string& args) {
    const std::string cmd = std::string(kCli) + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

struct Workspace {
    fs::path root;

    Workspace() : root(fs::temp_directory_path() / "inversenet_cli_test") {
        fs::remove_all(root);
        fs::create_directories(root / "raw");
        // smooth images: with k_reg = 0 the Wiener division amplifies the
        // 8-bit quantization noise of y by 1/|transfer|, so flat-spectrum
        // noise images would not restore cleanly
        Rng rng(5150);
        for (int i = 0; i < 3; ++i) {
            Tensor img(Shape{1, 16, 16, 3});
            for (std::int64_t c = 0; c < 3; ++c) {
                const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0);
                const double ph = rng.uniform(0.0, 6.28);
                for (std::int64_t r = 0; r < 16; ++r)
                    for (std::int64_t q = 0; q < 16; ++q)
                        img.at(0, r, q, c) =
                            0.5 + 0.4 * std::sin(fx * 0.39 * static_cast<double>(r) + ph) *
                                      std::cos(fy * 0.39 * static_cast<double>(q));
            }
            write_png((root / "raw" / ("img" + std::to_string(i) + ".png")).string(), img);
        }
        std::ofstream cfg(root / "cfg.json");
        cfg << R"({
  "task": "deblur",
  "seed": 9,
  "image": {"size": 16, "channels": 3},
  "operator": {"kernel": {"kind": "gaussian", "size": 3, "sigma": 0.5}},
  "unet": {"filters": [4, 6]},
  "dae": {"r": 2, "pre_channels": [6], "post_channels": [6]},
  "comparator": {"features": 8, "seed": 3},
  "train": {"batch_size": 2, "iters": 2, "checkpoint_every": 0},
  "solver": {"beta": 0.01, "prox": "identity", "z_solver": "fourier",
             "max_iter": 500, "tol_primal": 1e-9, "wiener_k_reg": 0.0},
  "paths": {"data_dir": ")" << (root / "data").string() << R"("}
})";
    }
    ~Workspace() { fs::remove_all(root); }

    std::string cfg() const { return (root / "cfg.json").string(); }
};

std::size_t count_pngs(const fs::path& dir) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") ++n;
    return n;
}

}  // namespace

TEST_CASE("cli: degrade -> solve -> train -> infer -> eval round trip") {
    Workspace ws;

    // degrade reads paths.data_dir; point it at raw via --config override? The
    // config's data_dir is the paired-data dir; degrade consumes raw inputs
    // from it, so run degrade with a config whose data_dir is raw/.
    {
        std::ofstream cfg(ws.root / "cfg_degrade.json");
        std::ifstream base(ws.cfg());
        std::string text((std::istreambuf_iterator<char>(base)),
                         std::istreambuf_iterator<char>());
        const std::string from = (ws.root / "data").string();
        const std::string to = (ws.root / "raw").string();
        cfg << text.replace(text.find(from), from.size(), to);
    }
    REQUIRE(run("degrade --config " + (ws.root / "cfg_degrade.json").string() + " --out " +
                (ws.root / "data").string()) == 0);
    REQUIRE(count_pngs(ws.root / "data" / "x") == 3);
    REQUIRE(count_pngs(ws.root / "data" / "y") == 3);
    REQUIRE(fs::exists(ws.root / "data" / "kernel.txt"));

    REQUIRE(run("solve --config " + ws.cfg() + " --method wiener --out " +
                (ws.root / "wiener").string()) == 0);
    REQUIRE(count_pngs(ws.root / "wiener" / "restored") == 3);
    {
        std::ifstream m(ws.root / "wiener" / "metrics.csv");
        std::string header;
        std::getline(m, header);
        REQUIRE(header == "file,psnr,ssim");
        // delta-free gaussian blur + k_reg 0: near-exact recovery up to PNG
        // quantization, so psnr should be high
        std::string row;
        std::getline(m, row);
        const double p = std::stod(row.substr(row.find(',') + 1));
        REQUIRE(p > 35.0);
    }

    REQUIRE(run("solve --config " + ws.cfg() + " --method admm --out " +
                (ws.root / "admm").string()) == 0);
    REQUIRE(fs::exists(ws.root / "admm" / "trace_img0.csv"));
    {
        std::ifstream t(ws.root / "admm" / "trace_img0.csv");
        std::string header;
        std::getline(t, header);
        REQUIRE(header == "iteration,primal_residual,objective");
    }

    REQUIRE(run("train --config " + ws.cfg() + " --out " + (ws.root / "run").string()) == 0);
    REQUIRE(fs::exists(ws.root / "run" / "checkpoint" / "manifest.txt"));
    {
        std::ifstream t(ws.root / "run" / "trace.csv");
        std::string header, row;
        std::getline(t, header);
        REQUIRE(header == "iter,L_D,L_G_z,L_G_xhat,psnr_z,psnr_xhat,var_x_minus_z");
        std::getline(t, row);
        REQUIRE(row.rfind("1,", 0) == 0);
    }

    REQUIRE(run("infer --config " + ws.cfg() + " --checkpoint " +
                (ws.root / "run" / "checkpoint").string() + " --out " +
                (ws.root / "inf").string()) == 0);
    REQUIRE(count_pngs(ws.root / "inf" / "z") == 3);
    REQUIRE(count_pngs(ws.root / "inf" / "xhat") == 3);

    // inference is deterministic: run twice, outputs byte-identical
    REQUIRE(run("infer --config " + ws.cfg() + " --checkpoint " +
                (ws.root / "run" / "checkpoint").string() + " --out " +
                (ws.root / "inf2").string()) == 0);
    for (int i = 0; i < 3; ++i) {
        const std::string name = "img" + std::to_string(i) + ".png";
        std::ifstream a(ws.root / "inf" / "xhat" / name, std::ios::binary);
        std::ifstream b(ws.root / "inf2" / "xhat" / name, std::ios::binary);
        const std::string da((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        const std::string db((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        REQUIRE(da == db);
    }

    // eval: identical dirs give exact-match psnr and ssim 1
    REQUIRE(run("eval " + (ws.root / "data" / "x").string() + " " +
                (ws.root / "data" / "x").string() + " --out " +
                (ws.root / "eval_same.csv").string()) == 0);
    {
        std::ifstream e(ws.root / "eval_same.csv");
        std::string header, row;
        std::getline(e, header);
        std::getline(e, row);
        REQUIRE(row.find(",99,1") != std::string::npos);
    }
    REQUIRE(run("eval " + (ws.root / "inf" / "xhat").string() + " " +
                (ws.root / "data" / "x").string()) == 0);

    // name-set mismatch is an error
    fs::create_directories(ws.root / "partial");
    fs::copy_file(ws.root / "data" / "x" / "img0.png", ws.root / "partial" / "img0.png");
    REQUIRE(run("eval " + (ws.root / "partial").string() + " " +
                (ws.root / "data" / "x").string()) != 0);

    // resume refuses a different experiment
    {
        std::ifstream base(ws.cfg());
        std::string text((std::istreambuf_iterator<char>(base)), std::istreambuf_iterator<char>());
        const std::string from = "\"seed\": 9";
        std::ofstream other(ws.root / "cfg_other.json");
        other << text.replace(text.find(from), from.size(), "\"seed\": 10");
    }
    REQUIRE(run("train --config " + (ws.root / "cfg_other.json").string() + " --checkpoint " +
                (ws.root / "run" / "checkpoint").string() + " --out " +
                (ws.root / "run2").string()) != 0);
}

TEST_CASE("cli: gradcheck runs clean") { REQUIRE(run("gradcheck --seed 4242") == 0); }

TEST_CASE("cli: wiener with a delta kernel reproduces the measurements exactly") {
    Workspace ws;
    // flat kernel of size 1 is the identity operator
    std::ofstream cfg(ws.root / "cfg_delta.json");
    cfg << R"({
  "task": "deblur",
  "seed": 9,
  "image": {"size": 16, "channels": 3},
  "operator": {"kernel": {"kind": "flat", "size": 1}},
  "unet": {"filters": [4, 6]},
  "dae": {"r": 2, "pre_channels": [6], "post_channels": [6]},
  "solver": {"wiener_k_reg": 0.0},
  "paths": {"data_dir": ")" << (ws.root / "raw").string() << R"("}
})";
    cfg.close();
    REQUIRE(run("degrade --config " + (ws.root / "cfg_delta.json").string() + " --out " +
                (ws.root / "ddata").string()) == 0);
    std::ofstream cfg2(ws.root / "cfg_delta2.json");
    std::ifstream base(ws.root / "cfg_delta.json");
    std::string text((std::istreambuf_iterator<char>(base)), std::istreambuf_iterator<char>());
    const std::string from = (ws.root / "raw").string();
    cfg2 << text.replace(text.find(from), from.size(), (ws.root / "ddata").string());
    cfg2.close();
    REQUIRE(run("solve --config " + (ws.root / "cfg_delta2.json").string() +
                " --method wiener --out " + (ws.root / "dw").string()) == 0);
    REQUIRE(run("eval " + (ws.root / "dw" / "restored").string() + " " +
                (ws.root / "ddata" / "y").string() + " --out " +
                (ws.root / "delta_eval.csv").string()) == 0);
    std::ifstream e(ws.root / "delta_eval.csv");
    std::string header, row;
    std::getline(e, header);
    while (std::getline(e, row))
        if (row.rfind("mean,", 0) == 0) REQUIRE(row == "mean,99,1");
}

TEST_CASE("cli: wiener is rejected outside the deblur task") {
    Workspace ws;
    std::ofstream cfg(ws.root / "cfg_sr.json");
    cfg << R"({
  "task": "sr4",
  "seed": 9,
  "image": {"size": 16, "channels": 3},
  "operator": {"kernel": {"kind": "flat", "size": 3}},
  "unet": {"filters": [4, 6]},
  "dae": {"r": 4, "pre_channels": [6], "post_channels": [6]},
  "paths": {"data_dir": ")" << (ws.root / "raw").string() << R"("}
})";
    cfg.close();
    REQUIRE(run("degrade --config " + (ws.root / "cfg_sr.json").string() + " --out " +
                (ws.root / "srdata").string()) == 0);
    std::ofstream cfg2(ws.root / "cfg_sr2.json");
    std::ifstream base(ws.root / "cfg_sr.json");
    std::string text((std::istreambuf_iterator<char>(base)), std::istreambuf_iterator<char>());
    const std::string from = (ws.root / "raw").string();
    cfg2 << text.replace(text.find(from), from.size(), (ws.root / "srdata").string());
    cfg2.close();
    REQUIRE(run("solve --config " + (ws.root / "cfg_sr2.json").string() + " --method wiener --out " +
                (ws.root / "w").string()) != 0);
}
