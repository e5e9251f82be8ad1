#ifndef INVERSENET_CHECKPOINT_HPP
#define INVERSENET_CHECKPOINT_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "inversenet/tensor.hpp"

// Checkpoints: a plain-text manifest plus one raw little-endian float64 file
// per tensor. Round trips are bitwise exact.

namespace inversenet {

struct CheckpointMeta {
    std::string config_hash;
    std::int64_t iteration = 0;
    std::uint64_t seed = 0;
    std::map<std::string, std::int64_t> scalars;  // e.g. optimizer step counters
};

namespace detail {

inline std::string tensor_file_name(std::string name) {
    for (char& c : name)
        if (c == '/') c = '_';
    return name + ".f64";
}

inline void write_raw(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("checkpoint: cannot open '" + path.string() + "' for writing");
    // native x86-64 doubles are IEEE-754 little-endian, the declared format
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw Error("checkpoint: write failed for '" + path.string() + "'");
}

inline void read_raw(const std::filesystem::path& path, Tensor& t) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("checkpoint: cannot open '" + path.string() + "'");
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (f.gcount() != static_cast<std::streamsize>(t.size() * sizeof(double)))
        throw Error("checkpoint: '" + path.string() + "' is truncated");
}

}  // namespace detail

inline void save_checkpoint(const std::string& dir, const CheckpointMeta& meta,
                            const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream m(fs::path(dir) / "manifest.txt");
    if (!m) throw Error("checkpoint: cannot write manifest in '" + dir + "'");
    m << "inversenet-checkpoint 1\n";
    m << "config_hash " << meta.config_hash << "\n";
    m << "iteration " << meta.iteration << "\n";
    m << "seed " << meta.seed << "\n";
    for (const auto& [k, v] : meta.scalars) m << "scalar " << k << " " << v << "\n";
    for (const auto& [name, t] : tensors) {
        const Shape s = t->shape();
        m << "tensor " << name << " " << s.n << " " << s.h << " " << s.w << " " << s.c << " "
          << detail::tensor_file_name(name) << "\n";
        detail::write_raw(fs::path(dir) / detail::tensor_file_name(name), *t);
    }
    if (!m) throw Error("checkpoint: manifest write failed in '" + dir + "'");
}

inline CheckpointMeta read_checkpoint_meta(const std::string& dir) {
    std::ifstream m(std::filesystem::path(dir) / "manifest.txt");
    if (!m) throw Error("checkpoint: no manifest in '" + dir + "'");
    std::string tag;
    int version = 0;
    m >> tag >> version;
    if (tag != "inversenet-checkpoint" || version != 1)
        throw Error("checkpoint: '" + dir + "' is not a version-1 checkpoint");
    CheckpointMeta meta;
    std::string key;
    while (m >> key) {
        if (key == "config_hash") {
            m >> meta.config_hash;
        } else if (key == "iteration") {
            m >> meta.iteration;
        } else if (key == "seed") {
            m >> meta.seed;
        } else if (key == "scalar") {
            std::string name;
            std::int64_t v;
            m >> name >> v;
            meta.scalars[name] = v;
        } else if (key == "tensor") {
            std::string rest;
            std::getline(m, rest);
        } else {
            throw Error("checkpoint: unknown manifest key '" + key + "'");
        }
    }
    return meta;
}

// Loads the named tensors; every requested name must exist with the exact
// shape it was saved with.
inline void load_checkpoint(const std::string& dir,
                            const std::vector<std::pair<std::string, Tensor*>>& tensors) {
    namespace fs = std::filesystem;
    std::ifstream m(fs::path(dir) / "manifest.txt");
    if (!m) throw Error("checkpoint: no manifest in '" + dir + "'");
    std::map<std::string, std::pair<Shape, std::string>> index;
    std::string line;
    while (std::getline(m, line)) {
        std::istringstream is(line);
        std::string key;
        is >> key;
        if (key != "tensor") continue;
        std::string name, file;
        Shape s;
        is >> name >> s.n >> s.h >> s.w >> s.c >> file;
        if (!is) throw Error("checkpoint: malformed tensor line '" + line + "'");
        index[name] = {s, file};
    }
    for (const auto& [name, t] : tensors) {
        const auto it = index.find(name);
        if (it == index.end())
            throw Error("checkpoint: '" + dir + "' has no tensor '" + name + "'");
        if (!(it->second.first == t->shape()))
            throw Error("checkpoint: tensor '" + name + "' has shape " +
                        it->second.first.str() + ", expected " + t->shape().str());
        detail::read_raw(fs::path(dir) / it->second.second, *t);
    }
}

// FNV-1a over the canonical config text; used to refuse resuming with a
// different experiment definition.
inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace inversenet

#endif  // INVERSENET_CHECKPOINT_HPP
