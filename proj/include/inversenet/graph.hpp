#ifndef INVERSENET_GRAPH_HPP
#define INVERSENET_GRAPH_HPP

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "inversenet/nn_kernels.hpp"
#include "inversenet/rng.hpp"
#include "inversenet/tensor.hpp"

// Declarative layer graph compiled into a differentiable evaluator.
// Topology is a chain with named skip sources: every layer consumes the
// previous layer's output, except Concat which additionally reads an earlier
// named output (or one of the graph inputs "input"/"aux").

namespace inversenet {

enum class LayerKind {
    Conv,
    ConvTranspose,
    BatchNorm,
    LeakyRelu,
    Relu,
    Tanh,
    Sigmoid,
    Dense,
    Concat,
    PixelUnshuffle,
    PixelShuffle,
};

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::ConvTranspose: return "conv_transpose";
        case LayerKind::BatchNorm: return "batch_norm";
        case LayerKind::LeakyRelu: return "leaky_relu";
        case LayerKind::Relu: return "relu";
        case LayerKind::Tanh: return "tanh";
        case LayerKind::Sigmoid: return "sigmoid";
        case LayerKind::Dense: return "dense";
        case LayerKind::Concat: return "concat";
        case LayerKind::PixelUnshuffle: return "pixel_unshuffle";
        case LayerKind::PixelShuffle: return "pixel_shuffle";
    }
    return "?";
}

struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    std::string name;  // output name; auto-generated when empty

    std::int64_t kh = 0, kw = 0, cin = 0, cout = 0;  // conv / conv_transpose
    std::int64_t stride = 1;
    double alpha = 0.0;          // leaky_relu slope
    std::int64_t r = 0;          // pixel shuffle factor
    std::int64_t units = 0;      // dense
    std::string concat_source;   // concat: earlier output name, "input" or "aux"
    bool use_bias = true;        // conv/conv_transpose; off when batch_norm follows

    LayerSpec& named(std::string n) {
        name = std::move(n);
        return *this;
    }

    // Convs feeding straight into batch_norm drop their bias; the BN shift
    // subsumes it and a redundant bias has an exactly-zero gradient.
    LayerSpec& without_bias() {
        use_bias = false;
        return *this;
    }
};

namespace layers {

inline LayerSpec conv(std::int64_t kh, std::int64_t kw, std::int64_t cin, std::int64_t cout,
                      std::int64_t stride = 1) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.kh = kh; s.kw = kw; s.cin = cin; s.cout = cout; s.stride = stride;
    return s;
}
inline LayerSpec conv_transpose(std::int64_t kh, std::int64_t kw, std::int64_t cin,
                                std::int64_t cout, std::int64_t stride = 1) {
    LayerSpec s;
    s.kind = LayerKind::ConvTranspose;
    s.kh = kh; s.kw = kw; s.cin = cin; s.cout = cout; s.stride = stride;
    return s;
}
inline LayerSpec batch_norm() {
    LayerSpec s;
    s.kind = LayerKind::BatchNorm;
    return s;
}
inline LayerSpec leaky_relu(double alpha = 0.2) {
    LayerSpec s;
    s.kind = LayerKind::LeakyRelu;
    s.alpha = alpha;
    return s;
}
inline LayerSpec relu() {
    LayerSpec s;
    s.kind = LayerKind::Relu;
    return s;
}
inline LayerSpec tanh() {
    LayerSpec s;
    s.kind = LayerKind::Tanh;
    return s;
}
inline LayerSpec sigmoid() {
    LayerSpec s;
    s.kind = LayerKind::Sigmoid;
    return s;
}
inline LayerSpec dense(std::int64_t units) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.units = units;
    return s;
}
inline LayerSpec concat(std::string source) {
    LayerSpec s;
    s.kind = LayerKind::Concat;
    s.concat_source = std::move(source);
    return s;
}
inline LayerSpec pixel_unshuffle(std::int64_t r) {
    LayerSpec s;
    s.kind = LayerKind::PixelUnshuffle;
    s.r = r;
    return s;
}
inline LayerSpec pixel_shuffle(std::int64_t r) {
    LayerSpec s;
    s.kind = LayerKind::PixelShuffle;
    s.r = r;
    return s;
}

}  // namespace layers

// Discriminator outputs are clamped into [kSigmoidClamp, 1 - kSigmoidClamp]
// so the GAN losses stay finite.
constexpr double kSigmoidClamp = 1e-7;
constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.9;
constexpr double kWeightInitStd = 0.02;

class Graph {
public:
    Graph() = default;

    static Graph compile(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed,
                         std::optional<Shape> aux_shape = std::nullopt) {
        Graph g;
        g.input_shape_ = input_shape;
        g.aux_shape_ = aux_shape;
        Shape cur = input_shape;
        for (std::size_t idx = 0; idx < specs.size(); ++idx) {
            Node node;
            node.spec = specs[idx];
            if (node.spec.name.empty()) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "l%02zu_%s", idx,
                              layer_kind_name(node.spec.kind));
                node.spec.name = buf;
            }
            for (const Node& prev : g.nodes_)
                if (prev.spec.name == node.spec.name)
                    throw Error("Graph: duplicate layer name '" + node.spec.name + "'");
            node.in_shape = cur;
            g.init_node(node, static_cast<std::uint64_t>(idx), seed);
            cur = node.out_shape;
            g.nodes_.push_back(std::move(node));
        }
        if (g.nodes_.empty()) throw Error("Graph: empty layer list");
        g.output_shape_ = cur;
        return g;
    }

    const Shape& input_shape() const { return input_shape_; }
    const std::optional<Shape>& aux_shape() const { return aux_shape_; }
    const Shape& output_shape() const { return output_shape_; }
    std::size_t node_count() const { return nodes_.size(); }
    const LayerSpec& spec(std::size_t i) const { return nodes_[i].spec; }
    const Shape& node_output_shape(std::size_t i) const { return nodes_[i].out_shape; }

    // Named output shape (for architecture conformance checks).
    Shape shape_of(const std::string& name) const {
        for (const Node& n : nodes_)
            if (n.spec.name == name) return n.out_shape;
        throw Error("Graph: no layer named '" + name + "'");
    }

    struct ParamRef {
        std::string name;
        Tensor* tensor;
        bool trainable;
    };

    // Trainable parameters in deterministic order.
    std::vector<ParamRef> params() {
        std::vector<ParamRef> out;
        collect(out, /*include_buffers=*/false);
        return out;
    }

    // Trainable parameters plus batch-norm running statistics.
    std::vector<ParamRef> state_tensors() {
        std::vector<ParamRef> out;
        collect(out, /*include_buffers=*/true);
        return out;
    }

    std::int64_t param_count() {
        std::int64_t n = 0;
        for (const ParamRef& p : params()) n += p.tensor->size();
        return n;
    }

    struct Trace {
        Tensor input;
        Tensor aux;
        std::vector<Tensor> outs;
        std::vector<std::vector<double>> bn_mean;     // per node (batch or running)
        std::vector<std::vector<double>> bn_inv_std;  // 1/sqrt(var+eps)
        bool train = false;
        bool valid = false;
        const Tensor& output() const { return outs.back(); }
    };

    // Evaluates the graph. In train mode batch_norm uses batch statistics and
    // (when update_stats) folds them into the running statistics; in infer
    // mode it uses the running statistics. The compiled (h,w,c) shapes are
    // enforced; the batch dimension may differ from the compiled one.
    Trace forward(const Tensor& input, const Tensor* aux, bool train, bool update_stats = true) {
        check_like(input, input_shape_, "graph_forward: input");
        if (aux_shape_.has_value()) {
            if (!aux) throw Error("graph_forward: graph requires an aux input");
            check_like(*aux, *aux_shape_, "graph_forward: aux");
            if (aux->shape().n != input.shape().n)
                throw Error("graph_forward: aux batch " + std::to_string(aux->shape().n) +
                            " != input batch " + std::to_string(input.shape().n));
        } else if (aux) {
            throw Error("graph_forward: graph takes no aux input");
        }
        Trace t;
        t.input = input;
        if (aux) t.aux = *aux;
        t.train = train;
        t.outs.reserve(nodes_.size());
        t.bn_mean.resize(nodes_.size());
        t.bn_inv_std.resize(nodes_.size());
        const Tensor* cur = &input;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            Tensor out = eval_node(i, *cur, t, train, update_stats);
            if (!out.all_finite())
                throw Error("graph_forward: non-finite activation at layer '" +
                            nodes_[i].spec.name + "'");
            t.outs.push_back(std::move(out));
            cur = &t.outs.back();
        }
        t.valid = true;
        return t;
    }

    // Convenience for inference-style use.
    Tensor apply(const Tensor& input, const Tensor* aux, bool train) {
        return forward(input, aux, train, /*update_stats=*/false).output();
    }

    struct Gradients {
        std::vector<Tensor> params;  // aligned with params() order
        Tensor input;
        Tensor aux;
    };

    // Reverse pass for the scalar loss whose gradient w.r.t. the graph output
    // is out_grad. Deterministic for fixed inputs.
    Gradients backward(const Trace& t, const Tensor& out_grad) const {
        if (!t.valid || t.outs.size() != nodes_.size())
            throw Error("graph_backward: trace does not match graph (run forward first)");
        const std::int64_t batch = t.input.shape().n;
        check_like(out_grad, output_shape_, "graph_backward: out_grad");
        if (out_grad.shape().n != batch)
            throw Error("graph_backward: out_grad batch mismatch");

        std::vector<Tensor> node_grad(nodes_.size());
        node_grad.back() = out_grad;
        Tensor input_grad(with_n(input_shape_, batch));
        Tensor aux_grad = aux_shape_ ? Tensor(with_n(*aux_shape_, batch)) : Tensor();

        Gradients result;
        std::vector<std::vector<Tensor>> per_node_param_grads(nodes_.size());

        for (std::size_t ii = nodes_.size(); ii-- > 0;) {
            const Node& node = nodes_[ii];
            if (node_grad[ii].empty())  // unused branch (possible for skip-only outputs)
                node_grad[ii] = Tensor(with_n(node.out_shape, batch));
            const Tensor& dy = node_grad[ii];
            const Tensor& x_in = (ii == 0) ? t.input : t.outs[ii - 1];
            Tensor dx;  // gradient to chain predecessor
            std::vector<Tensor>& pg = per_node_param_grads[ii];

            switch (node.spec.kind) {
                case LayerKind::Conv: {
                    dx = nnk::conv2d_input_grad(dy, node.weight, with_n(node.in_shape, batch),
                                                node.spec.stride);
                    pg.push_back(nnk::conv2d_kernel_grad(x_in, dy, node.spec.kh, node.spec.kw,
                                                         node.spec.stride));
                    if (node.spec.use_bias)
                        pg.push_back(Tensor(node.bias.shape(), nnk::bias_grad(dy)));
                    break;
                }
                case LayerKind::ConvTranspose: {
                    const Tensor wt = nnk::kernel_transpose(node.weight);
                    dx = nnk::conv2d_forward(dy, wt, nullptr, node.spec.stride);
                    Tensor dwt = nnk::conv2d_kernel_grad(dy, x_in, node.spec.kh, node.spec.kw,
                                                         node.spec.stride);
                    pg.push_back(nnk::kernel_transpose(dwt));
                    if (node.spec.use_bias)
                        pg.push_back(Tensor(node.bias.shape(), nnk::bias_grad(dy)));
                    break;
                }
                case LayerKind::BatchNorm: {
                    dx = batch_norm_backward(node, x_in, dy, t.bn_mean[ii], t.bn_inv_std[ii],
                                             t.train, pg);
                    break;
                }
                case LayerKind::LeakyRelu: {
                    dx = Tensor(x_in.shape());
                    for (std::int64_t k = 0; k < dy.size(); ++k)
                        dx[k] = dy[k] * (x_in[k] > 0.0 ? 1.0 : node.spec.alpha);
                    break;
                }
                case LayerKind::Relu: {
                    dx = Tensor(x_in.shape());
                    for (std::int64_t k = 0; k < dy.size(); ++k)
                        dx[k] = x_in[k] > 0.0 ? dy[k] : 0.0;
                    break;
                }
                case LayerKind::Tanh: {
                    const Tensor& y = t.outs[ii];
                    dx = Tensor(x_in.shape());
                    for (std::int64_t k = 0; k < dy.size(); ++k)
                        dx[k] = dy[k] * (1.0 - y[k] * y[k]);
                    break;
                }
                case LayerKind::Sigmoid: {
                    const Tensor& y = t.outs[ii];
                    dx = Tensor(x_in.shape());
                    for (std::int64_t k = 0; k < dy.size(); ++k) {
                        const bool clamped =
                            y[k] <= kSigmoidClamp || y[k] >= 1.0 - kSigmoidClamp;
                        dx[k] = clamped ? 0.0 : dy[k] * y[k] * (1.0 - y[k]);
                    }
                    break;
                }
                case LayerKind::Dense: {
                    dx = Tensor(x_in.shape());
                    const std::int64_t f_dim = node.in_shape.h * node.in_shape.w * node.in_shape.c;
                    const std::int64_t units = node.spec.units;
                    Tensor dw(node.weight.shape());
                    Tensor db(node.bias.shape());
                    for (std::int64_t n = 0; n < batch; ++n) {
                        const double* xr = x_in.data() + n * f_dim;
                        const double* gr = dy.data() + n * units;
                        double* dxr = dx.data() + n * f_dim;
                        for (std::int64_t f = 0; f < f_dim; ++f) {
                            const double* wrow = node.weight.data() + f * units;
                            double* dwrow = dw.data() + f * units;
                            double s = 0.0;
                            for (std::int64_t u = 0; u < units; ++u) {
                                s += wrow[u] * gr[u];
                                dwrow[u] += xr[f] * gr[u];
                            }
                            dxr[f] = s;
                        }
                        for (std::int64_t u = 0; u < units; ++u) db[u] += gr[u];
                    }
                    pg.push_back(std::move(dw));
                    pg.push_back(std::move(db));
                    break;
                }
                case LayerKind::Concat: {
                    const Shape a = with_n(node.in_shape, batch);
                    dx = Tensor(a);
                    const Shape src_shape = with_n(source_shape(node.concat_index), batch);
                    Tensor dsrc(src_shape);
                    const std::int64_t spatial = a.n * a.h * a.w;
                    for (std::int64_t p = 0; p < spatial; ++p) {
                        const double* gp = dy.data() + p * (a.c + src_shape.c);
                        double* da = dx.data() + p * a.c;
                        double* db_ = dsrc.data() + p * src_shape.c;
                        for (std::int64_t c = 0; c < a.c; ++c) da[c] = gp[c];
                        for (std::int64_t c = 0; c < src_shape.c; ++c) db_[c] = gp[a.c + c];
                    }
                    route_grad(node.concat_index, std::move(dsrc), node_grad, input_grad,
                               aux_grad);
                    break;
                }
                case LayerKind::PixelUnshuffle:
                    dx = nnk::pixel_shuffle(dy, node.spec.r);
                    break;
                case LayerKind::PixelShuffle:
                    dx = nnk::pixel_unshuffle(dy, node.spec.r);
                    break;
            }

            if (ii == 0) {
                input_grad += dx;
            } else {
                if (node_grad[ii - 1].empty())
                    node_grad[ii - 1] = std::move(dx);
                else
                    node_grad[ii - 1] += dx;
            }
        }

        for (std::size_t i = 0; i < nodes_.size(); ++i)
            for (Tensor& g : per_node_param_grads[i]) result.params.push_back(std::move(g));
        result.input = std::move(input_grad);
        result.aux = std::move(aux_grad);
        return result;
    }

private:
    struct Node {
        LayerSpec spec;
        Shape in_shape, out_shape;
        int concat_index = kNone;  // kInput / kAux / node index
        Tensor weight, bias;                          // conv/convT/dense
        Tensor gamma, beta, run_mean, run_var;        // batch_norm
    };
    static constexpr int kNone = -1, kInput = -2, kAux = -3;

    static Shape with_n(Shape s, std::int64_t n) {
        s.n = n;
        return s;
    }

    static void check_like(const Tensor& t, const Shape& want, const std::string& ctx) {
        const Shape& s = t.shape();
        if (s.h != want.h || s.w != want.w || s.c != want.c)
            throw Error(ctx + ": expected (*," + std::to_string(want.h) + "," +
                        std::to_string(want.w) + "," + std::to_string(want.c) + "), got " +
                        s.str());
    }

    Shape source_shape(int idx) const {
        if (idx == kInput) return input_shape_;
        if (idx == kAux) return *aux_shape_;
        return nodes_[static_cast<std::size_t>(idx)].out_shape;
    }

    static void route_grad(int idx, Tensor g, std::vector<Tensor>& node_grad, Tensor& input_grad,
                           Tensor& aux_grad) {
        if (idx == kInput) {
            input_grad += g;
        } else if (idx == kAux) {
            aux_grad += g;
        } else {
            Tensor& slot = node_grad[static_cast<std::size_t>(idx)];
            if (slot.empty())
                slot = std::move(g);
            else
                slot += g;
        }
    }

    void init_node(Node& node, std::uint64_t idx, std::uint64_t seed) {
        const LayerSpec& s = node.spec;
        const Shape in = node.in_shape;
        Rng rng(mix_seed(seed, idx));
        auto fail = [&](const std::string& msg) {
            throw Error("Graph: layer '" + node.spec.name + "' (" + layer_kind_name(s.kind) +
                        "): " + msg);
        };

        // the kind determines which optional fields are in use; reject stray ones
        {
            const bool is_conv = s.kind == LayerKind::Conv || s.kind == LayerKind::ConvTranspose;
            const bool is_leaky = s.kind == LayerKind::LeakyRelu;
            const bool is_dense = s.kind == LayerKind::Dense;
            const bool is_concat = s.kind == LayerKind::Concat;
            const bool is_shuffle =
                s.kind == LayerKind::PixelUnshuffle || s.kind == LayerKind::PixelShuffle;
            if (!is_conv && (s.kh || s.kw || s.cin || s.cout || s.stride != 1 || !s.use_bias))
                fail("kernel/stride/bias fields are only valid on conv layers");
            if (!is_leaky && s.alpha != 0.0) fail("alpha is only valid on leaky_relu");
            if (!is_dense && s.units) fail("units is only valid on dense");
            if (!is_concat && !s.concat_source.empty()) fail("concat_source is only valid on concat");
            if (!is_shuffle && s.r) fail("shuffle factor is only valid on pixel_(un)shuffle");
        }

        switch (s.kind) {
            case LayerKind::Conv:
            case LayerKind::ConvTranspose: {
                if (s.kh < 1 || s.kw < 1 || s.cin < 1 || s.cout < 1 || s.stride < 1)
                    fail("invalid kernel/stride");
                if (in.c != s.cin)
                    fail("input channels " + std::to_string(in.c) + " != cin " +
                         std::to_string(s.cin));
                node.weight = Tensor(Shape{s.kh, s.kw, s.cin, s.cout});
                for (std::int64_t k = 0; k < node.weight.size(); ++k)
                    node.weight[k] = rng.truncated_normal(kWeightInitStd);
                if (s.use_bias) node.bias = Tensor(Shape{1, 1, 1, s.cout});
                if (s.kind == LayerKind::Conv) {
                    const nnk::SamePad p = nnk::same_pad(in.h, in.w, s.kh, s.kw, s.stride);
                    node.out_shape = Shape{in.n, p.out_h, p.out_w, s.cout};
                } else {
                    node.out_shape = Shape{in.n, in.h * s.stride, in.w * s.stride, s.cout};
                }
                break;
            }
            case LayerKind::BatchNorm: {
                node.gamma = Tensor(Shape{1, 1, 1, in.c}, 1.0);
                node.beta = Tensor(Shape{1, 1, 1, in.c}, 0.0);
                node.run_mean = Tensor(Shape{1, 1, 1, in.c}, 0.0);
                node.run_var = Tensor(Shape{1, 1, 1, in.c}, 1.0);
                node.out_shape = in;
                break;
            }
            case LayerKind::LeakyRelu:
                if (s.alpha <= 0.0 || s.alpha >= 1.0) fail("slope must be in (0,1)");
                node.out_shape = in;
                break;
            case LayerKind::Relu:
            case LayerKind::Tanh:
            case LayerKind::Sigmoid:
                node.out_shape = in;
                break;
            case LayerKind::Dense: {
                if (s.units < 1) fail("units must be positive");
                const std::int64_t f_dim = in.h * in.w * in.c;
                node.weight = Tensor(Shape{1, 1, f_dim, s.units});
                for (std::int64_t k = 0; k < node.weight.size(); ++k)
                    node.weight[k] = rng.truncated_normal(kWeightInitStd);
                node.bias = Tensor(Shape{1, 1, 1, s.units});
                node.out_shape = Shape{in.n, 1, 1, s.units};
                break;
            }
            case LayerKind::Concat: {
                if (s.concat_source.empty()) fail("concat requires a source");
                if (s.concat_source == "input") {
                    node.concat_index = kInput;
                } else if (s.concat_source == "aux") {
                    if (!aux_shape_) fail("concat source 'aux' but graph has no aux input");
                    node.concat_index = kAux;
                } else {
                    node.concat_index = kNone;
                    for (std::size_t i = 0; i < nodes_.size(); ++i)
                        if (nodes_[i].spec.name == s.concat_source)
                            node.concat_index = static_cast<int>(i);
                    if (node.concat_index == kNone)
                        fail("concat source '" + s.concat_source + "' not found among earlier layers");
                }
                const Shape src = source_shape(node.concat_index);
                if (src.n != in.n || src.h != in.h || src.w != in.w)
                    fail("concat spatial mismatch " + in.str() + " vs " + src.str());
                node.out_shape = Shape{in.n, in.h, in.w, in.c + src.c};
                break;
            }
            case LayerKind::PixelUnshuffle: {
                if (s.r < 1) fail("shuffle factor must be positive");
                if (in.h % s.r != 0 || in.w % s.r != 0)
                    fail("spatial dims " + in.str() + " not divisible by r=" + std::to_string(s.r));
                node.out_shape = Shape{in.n, in.h / s.r, in.w / s.r, in.c * s.r * s.r};
                break;
            }
            case LayerKind::PixelShuffle: {
                if (s.r < 1) fail("shuffle factor must be positive");
                if (in.c % (s.r * s.r) != 0)
                    fail("channels " + std::to_string(in.c) + " not divisible by r^2");
                node.out_shape = Shape{in.n, in.h * s.r, in.w * s.r, in.c / (s.r * s.r)};
                break;
            }
        }
    }

    Tensor eval_node(std::size_t i, const Tensor& x, Trace& t, bool train, bool update_stats) {
        Node& node = nodes_[i];
        const LayerSpec& s = node.spec;
        switch (s.kind) {
            case LayerKind::Conv:
                return nnk::conv2d_forward(x, node.weight,
                                           s.use_bias ? node.bias.data() : nullptr, s.stride);
            case LayerKind::ConvTranspose: {
                const Tensor wt = nnk::kernel_transpose(node.weight);
                const Shape out = with_n(node.out_shape, x.shape().n);
                Tensor y = nnk::conv2d_input_grad(x, wt, out, s.stride);
                if (s.use_bias) {
                    const double* b = node.bias.data();
                    double* yd = y.data();
                    const std::int64_t outer = out.n * out.h * out.w;
                    for (std::int64_t p = 0; p < outer; ++p)
                        for (std::int64_t c = 0; c < out.c; ++c) yd[p * out.c + c] += b[c];
                }
                return y;
            }
            case LayerKind::BatchNorm:
                return batch_norm_forward(node, x, t.bn_mean[i], t.bn_inv_std[i], train,
                                          update_stats);
            case LayerKind::LeakyRelu: {
                Tensor y(x.shape());
                for (std::int64_t k = 0; k < x.size(); ++k)
                    y[k] = x[k] > 0.0 ? x[k] : s.alpha * x[k];
                return y;
            }
            case LayerKind::Relu: {
                Tensor y(x.shape());
                for (std::int64_t k = 0; k < x.size(); ++k) y[k] = x[k] > 0.0 ? x[k] : 0.0;
                return y;
            }
            case LayerKind::Tanh: {
                Tensor y(x.shape());
                for (std::int64_t k = 0; k < x.size(); ++k) y[k] = std::tanh(x[k]);
                return y;
            }
            case LayerKind::Sigmoid: {
                Tensor y(x.shape());
                for (std::int64_t k = 0; k < x.size(); ++k) {
                    const double v = 1.0 / (1.0 + std::exp(-x[k]));
                    y[k] = std::min(1.0 - kSigmoidClamp, std::max(kSigmoidClamp, v));
                }
                return y;
            }
            case LayerKind::Dense: {
                const std::int64_t f_dim = node.in_shape.h * node.in_shape.w * node.in_shape.c;
                Tensor y(with_n(node.out_shape, x.shape().n));
                for (std::int64_t n = 0; n < x.shape().n; ++n) {
                    const double* xr = x.data() + n * f_dim;
                    double* yr = y.data() + n * s.units;
                    for (std::int64_t u = 0; u < s.units; ++u) yr[u] = node.bias[u];
                    for (std::int64_t f = 0; f < f_dim; ++f) {
                        const double xv = xr[f];
                        const double* wrow = node.weight.data() + f * s.units;
                        for (std::int64_t u = 0; u < s.units; ++u) yr[u] += xv * wrow[u];
                    }
                }
                return y;
            }
            case LayerKind::Concat: {
                const Tensor& src = node.concat_index == kInput ? t.input
                                  : node.concat_index == kAux  ? t.aux
                                  : t.outs[static_cast<std::size_t>(node.concat_index)];
                Tensor y(with_n(node.out_shape, x.shape().n));
                const std::int64_t spatial = x.shape().n * node.in_shape.h * node.in_shape.w;
                const std::int64_t c1 = node.in_shape.c, c2 = src.shape().c;
                for (std::int64_t p = 0; p < spatial; ++p) {
                    double* yp = y.data() + p * (c1 + c2);
                    const double* ap = x.data() + p * c1;
                    const double* bp = src.data() + p * c2;
                    for (std::int64_t c = 0; c < c1; ++c) yp[c] = ap[c];
                    for (std::int64_t c = 0; c < c2; ++c) yp[c1 + c] = bp[c];
                }
                return y;
            }
            case LayerKind::PixelUnshuffle:
                return nnk::pixel_unshuffle(x, s.r);
            case LayerKind::PixelShuffle:
                return nnk::pixel_shuffle(x, s.r);
        }
        throw Error("Graph: unreachable");
    }

    Tensor batch_norm_forward(Node& node, const Tensor& x, std::vector<double>& mean_out,
                              std::vector<double>& inv_std_out, bool train, bool update_stats) {
        const Shape in = x.shape();
        const std::int64_t m = in.n * in.h * in.w;
        const std::int64_t C = in.c;
        std::vector<double> mean(static_cast<std::size_t>(C), 0.0);
        std::vector<double> var(static_cast<std::size_t>(C), 0.0);
        if (train) {
            for (std::int64_t p = 0; p < m; ++p) {
                const double* xp = x.data() + p * C;
                for (std::int64_t c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] += xp[c];
            }
            for (std::int64_t c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] /= static_cast<double>(m);
            for (std::int64_t p = 0; p < m; ++p) {
                const double* xp = x.data() + p * C;
                for (std::int64_t c = 0; c < C; ++c) {
                    const double d = xp[c] - mean[static_cast<std::size_t>(c)];
                    var[static_cast<std::size_t>(c)] += d * d;
                }
            }
            for (std::int64_t c = 0; c < C; ++c) var[static_cast<std::size_t>(c)] /= static_cast<double>(m);
            if (update_stats) {
                for (std::int64_t c = 0; c < C; ++c) {
                    node.run_mean[c] = kBatchNormMomentum * node.run_mean[c] +
                                       (1.0 - kBatchNormMomentum) * mean[static_cast<std::size_t>(c)];
                    node.run_var[c] = kBatchNormMomentum * node.run_var[c] +
                                      (1.0 - kBatchNormMomentum) * var[static_cast<std::size_t>(c)];
                }
            }
        } else {
            for (std::int64_t c = 0; c < C; ++c) {
                mean[static_cast<std::size_t>(c)] = node.run_mean[c];
                var[static_cast<std::size_t>(c)] = node.run_var[c];
            }
        }
        mean_out = mean;
        inv_std_out.assign(static_cast<std::size_t>(C), 0.0);
        for (std::int64_t c = 0; c < C; ++c)
            inv_std_out[static_cast<std::size_t>(c)] =
                1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + kBatchNormEps);

        Tensor y(in);
        for (std::int64_t p = 0; p < m; ++p) {
            const double* xp = x.data() + p * C;
            double* yp = y.data() + p * C;
            for (std::int64_t c = 0; c < C; ++c) {
                const std::size_t cc = static_cast<std::size_t>(c);
                yp[c] = node.gamma[c] * (xp[c] - mean[cc]) * inv_std_out[cc] + node.beta[c];
            }
        }
        return y;
    }

    Tensor batch_norm_backward(const Node& node, const Tensor& x, const Tensor& dy,
                               const std::vector<double>& mean,
                               const std::vector<double>& inv_std, bool train,
                               std::vector<Tensor>& pg) const {
        const Shape in = x.shape();
        const std::int64_t m = in.n * in.h * in.w;
        const std::int64_t C = in.c;
        Tensor dgamma(node.gamma.shape());
        Tensor dbeta(node.beta.shape());
        std::vector<double> sum_dy(static_cast<std::size_t>(C), 0.0);
        std::vector<double> sum_dy_xhat(static_cast<std::size_t>(C), 0.0);
        for (std::int64_t p = 0; p < m; ++p) {
            const double* xp = x.data() + p * C;
            const double* gp = dy.data() + p * C;
            for (std::int64_t c = 0; c < C; ++c) {
                const std::size_t cc = static_cast<std::size_t>(c);
                const double xhat = (xp[c] - mean[cc]) * inv_std[cc];
                sum_dy[cc] += gp[c];
                sum_dy_xhat[cc] += gp[c] * xhat;
            }
        }
        for (std::int64_t c = 0; c < C; ++c) {
            dgamma[c] = sum_dy_xhat[static_cast<std::size_t>(c)];
            dbeta[c] = sum_dy[static_cast<std::size_t>(c)];
        }
        Tensor dx(in);
        if (train) {
            // d/dx of gamma*(x-mu_B)/sqrt(var_B+eps): batch statistics depend on x.
            for (std::int64_t p = 0; p < m; ++p) {
                const double* xp = x.data() + p * C;
                const double* gp = dy.data() + p * C;
                double* dp = dx.data() + p * C;
                for (std::int64_t c = 0; c < C; ++c) {
                    const std::size_t cc = static_cast<std::size_t>(c);
                    const double xhat = (xp[c] - mean[cc]) * inv_std[cc];
                    dp[c] = node.gamma[c] * inv_std[cc] *
                            (gp[c] - sum_dy[cc] / static_cast<double>(m) -
                             xhat * sum_dy_xhat[cc] / static_cast<double>(m));
                }
            }
        } else {
            for (std::int64_t p = 0; p < m; ++p) {
                const double* gp = dy.data() + p * C;
                double* dp = dx.data() + p * C;
                for (std::int64_t c = 0; c < C; ++c)
                    dp[c] = node.gamma[c] * inv_std[static_cast<std::size_t>(c)] * gp[c];
            }
        }
        pg.push_back(std::move(dgamma));
        pg.push_back(std::move(dbeta));
        return dx;
    }

    void collect(std::vector<ParamRef>& out, bool include_buffers) {
        for (Node& node : nodes_) {
            const std::string base = node.spec.name;
            switch (node.spec.kind) {
                case LayerKind::Conv:
                case LayerKind::ConvTranspose:
                    out.push_back({base + "/weight", &node.weight, true});
                    if (node.spec.use_bias) out.push_back({base + "/bias", &node.bias, true});
                    break;
                case LayerKind::Dense:
                    out.push_back({base + "/weight", &node.weight, true});
                    out.push_back({base + "/bias", &node.bias, true});
                    break;
                case LayerKind::BatchNorm:
                    out.push_back({base + "/gamma", &node.gamma, true});
                    out.push_back({base + "/beta", &node.beta, true});
                    if (include_buffers) {
                        out.push_back({base + "/running_mean", &node.run_mean, false});
                        out.push_back({base + "/running_var", &node.run_var, false});
                    }
                    break;
                default:
                    break;
            }
        }
    }

    std::vector<Node> nodes_;
    Shape input_shape_{};
    std::optional<Shape> aux_shape_;
    Shape output_shape_{};
};

}  // namespace inversenet

#endif  // INVERSENET_GRAPH_HPP
