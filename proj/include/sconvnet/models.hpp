#pragma once

// Declarative descriptions of the S-ConvNet A/B/C and All-ConvNet
// architectures, a builder that compiles them to a Network, and closed-form
// parameter counting.

#include <optional>
#include <string>
#include <vector>

#include "sconvnet/network.hpp"

namespace sconvnet::models {

struct LayerSpec {
    enum class Kind {
        Conv,           // k x k 'same' convolution + [BN] + activation + [dropout]
        Dense,          // fully connected + [BN] + activation + [dropout]
        Classifier,     // fully connected to G scores, no activation
        HeadConv,       // 'valid' convolution spanning the whole remaining map to G channels + [BN] + activation
        GlobalAverage,  // mean over the remaining spatial extent
    };

    Kind kind = Kind::Conv;
    std::size_t out = 0;  // channels / features; G for Classifier and HeadConv
    std::size_t kernel = 3;
    std::size_t stride = 1;
};

enum class PoolOption { None, Max, Average };

struct ModelOptions {
    std::size_t classes = 8;
    bool batch_norm = true;
    /// Negative selects the architecture default (0.35 S-ConvNet, 0.25 All-ConvNet).
    double dropout = -1.0;
    ActivationKind activation = ActivationKind::elu();
    /// Optional 2x2/2 pooling after the first convolution block.
    PoolOption pool = PoolOption::None;
    bool literal_pooling = false;
};

struct ModelSpec {
    std::string name;
    Shape input{1, 1, 16, 8};
    std::vector<LayerSpec> layers;
    std::size_t classes = 8;
    bool batch_norm = true;
    double dropout = 0.35;
    ActivationKind activation = ActivationKind::elu();
    std::optional<PoolSpec> pool_after_first;
};

inline constexpr double kSConvNetDropout = 0.35;
inline constexpr double kAllConvNetDropout = 0.25;

[[nodiscard]] inline std::vector<std::string> model_names() { return {"A", "B", "C-s2", "C-s1", "AllConv"}; }

/// Canonical spelling of a model name; accepts a few aliases.
[[nodiscard]] inline std::string canonical_name(const std::string& name) {
    if (name == "A" || name == "a") return "A";
    if (name == "B" || name == "b") return "B";
    if (name == "C-s2" || name == "C" || name == "c" || name == "Cs2" || name == "c-s2") return "C-s2";
    if (name == "C-s1" || name == "Cs1" || name == "c-s1") return "C-s1";
    if (name == "AllConv" || name == "allconv" || name == "All-ConvNet" || name == "all-conv") return "AllConv";
    throw ParameterError("unknown model '" + name + "' (expected A, B, C-s2, C-s1 or AllConv)");
}

[[nodiscard]] inline bool is_all_conv(const std::string& name) { return canonical_name(name) == "AllConv"; }

[[nodiscard]] inline ModelSpec model_spec(const std::string& name, const ModelOptions& opt = {}) {
    if (opt.classes < 2) throw ParameterError("model: need at least 2 classes");
    using K = LayerSpec::Kind;
    ModelSpec spec;
    spec.name = canonical_name(name);
    spec.classes = opt.classes;
    spec.batch_norm = opt.batch_norm;
    spec.activation = opt.activation;
    const std::size_t g = opt.classes;
    const auto conv = [](std::size_t out, std::size_t k = 3, std::size_t stride = 1) {
        return LayerSpec{K::Conv, out, k, stride};
    };

    if (spec.name == "A") {
        spec.layers = {conv(32), conv(64), conv(64), {K::Dense, 256}, {K::Classifier, g}};
    } else if (spec.name == "B") {
        spec.layers = {conv(32), conv(32, 1), conv(64), conv(64, 1), {K::Dense, 256}, {K::Classifier, g}};
    } else if (spec.name == "C-s2" || spec.name == "C-s1") {
        const std::size_t r = spec.name == "C-s2" ? 2 : 1;
        spec.layers = {conv(32), conv(32), conv(32, 3, r), conv(64), conv(64), conv(64, 3, r),
                       {K::Dense, 256}, {K::Classifier, g}};
    } else {
        spec.input = {1, 1, 16, 16};
        spec.layers = {conv(64),  conv(64),  conv(64, 3, 2), conv(128), conv(128), conv(128, 3, 2),
                       conv(128, 1), {K::HeadConv, g, 0, 1}, {K::GlobalAverage, 0, 0, 1}};
    }

    const double default_p = spec.name == "AllConv" ? kAllConvNetDropout : kSConvNetDropout;
    spec.dropout = opt.dropout < 0.0 ? default_p : opt.dropout;
    if (!(spec.dropout >= 0.0 && spec.dropout < 1.0)) throw ParameterError("model: dropout must lie in [0, 1)");

    if (opt.pool != PoolOption::None) {
        PoolSpec p = opt.pool == PoolOption::Max ? PoolSpec::max() : PoolSpec::average();
        p.literal = opt.literal_pooling;
        spec.pool_after_first = p;
    }
    return spec;
}

struct LayerCount {
    std::string description;
    std::size_t count = 0;
};

struct ParamCount {
    std::vector<LayerCount> layers;
    std::size_t total = 0;
    bool includes_batch_norm = false;
};

namespace detail {

inline Shape pooled(const Shape& s, const PoolSpec& p) {
    if (s.h < p.window || s.w < p.window) throw ShapeError("model: pooling window larger than feature map");
    return {s.n, s.c, (s.h - p.window) / p.stride + 1, (s.w - p.window) / p.stride + 1};
}

}  // namespace detail

/// Closed-form count: conv k*k*n*M + M, dense in*out + out, batch norm 2*C
/// per layer. Shapes are traced with the same padding rules the builder uses.
[[nodiscard]] inline ParamCount param_count(const ModelSpec& spec) {
    using K = LayerSpec::Kind;
    ParamCount pc;
    pc.includes_batch_norm = spec.batch_norm;
    Shape s = spec.input;
    const auto add = [&](std::string d, std::size_t n) {
        pc.layers.push_back({std::move(d), n});
        pc.total += n;
    };
    if (spec.batch_norm) add("input batchnorm", 2 * s.c);
    bool first = true;
    for (const auto& l : spec.layers) {
        switch (l.kind) {
            case K::Conv: {
                add(std::to_string(l.kernel) + "x" + std::to_string(l.kernel) + " conv " + std::to_string(l.out),
                    l.kernel * l.kernel * s.c * l.out + l.out);
                const auto g = ConvGeometry::compute(s.h, s.w, l.kernel, l.kernel, l.stride, Padding::Same);
                s = {s.n, l.out, g.out_h, g.out_w};
                if (spec.batch_norm) add("batchnorm " + std::to_string(l.out), 2 * l.out);
                if (first && spec.pool_after_first) s = detail::pooled(s, *spec.pool_after_first);
                first = false;
                break;
            }
            case K::Dense:
            case K::Classifier: {
                const std::size_t in = s.per_sample();
                add((l.kind == K::Dense ? "dense " : "classifier ") + std::to_string(in) + "->" + std::to_string(l.out),
                    in * l.out + l.out);
                s = {s.n, l.out, 1, 1};
                if (l.kind == K::Dense && spec.batch_norm) add("batchnorm " + std::to_string(l.out), 2 * l.out);
                break;
            }
            case K::HeadConv: {
                add(std::to_string(s.h) + "x" + std::to_string(s.w) + " head conv " + std::to_string(l.out),
                    s.h * s.w * s.c * l.out + l.out);
                s = {s.n, l.out, 1, 1};
                if (spec.batch_norm) add("batchnorm " + std::to_string(l.out), 2 * l.out);
                break;
            }
            case K::GlobalAverage: s = {s.n, s.c, 1, 1}; break;
        }
    }
    return pc;
}

/// Compiles a ModelSpec: optional BN on the input, BN before every
/// non-linearity, dropout after every hidden activation, and the optional
/// pooling stage after the first convolution block.
template <typename T>
[[nodiscard]] Network<T> build(const ModelSpec& spec) {
    using K = LayerSpec::Kind;
    Network<T> net(spec.input);
    if (spec.batch_norm) net.template add<BatchNorm<T>>(spec.input.c);
    const auto finish_hidden = [&](std::size_t channels, bool dropout) {
        if (spec.batch_norm) net.template add<BatchNorm<T>>(channels);
        net.template add<ActivationLayer<T>>(spec.activation);
        if (dropout && spec.dropout > 0.0) net.template add<Dropout<T>>(spec.dropout);
    };
    bool first = true;
    for (const auto& l : spec.layers) {
        const Shape s = net.output_shape(1);
        switch (l.kind) {
            case K::Conv:
                net.template add<Conv2d<T>>(s.c, l.out, l.kernel, l.kernel, l.stride, Padding::Same);
                finish_hidden(l.out, true);
                if (first && spec.pool_after_first) net.template add<Pool2d<T>>(*spec.pool_after_first);
                first = false;
                break;
            case K::Dense:
                net.template add<Dense<T>>(s.per_sample(), l.out);
                finish_hidden(l.out, true);
                break;
            case K::Classifier: net.template add<Dense<T>>(s.per_sample(), l.out); break;
            case K::HeadConv:
                net.template add<Conv2d<T>>(s.c, l.out, s.h, s.w, 1, Padding::Valid);
                finish_hidden(l.out, false);
                break;
            case K::GlobalAverage: net.template add<GlobalAvgPool<T>>(); break;
        }
    }
    if (net.num_classes() != spec.classes) throw ShapeError("model: final stage does not produce G scores");
    return net;
}

template <typename T>
[[nodiscard]] Network<T> build(const std::string& name, const ModelOptions& opt = {}) {
    return build<T>(model_spec(name, opt));
}

}  // namespace sconvnet::models
