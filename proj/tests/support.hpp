#pragma once

// Shared helpers for the unit tests and the acceptance binary: a small
// random-value generator, an independent direct-summation convolution, a
// finite-difference gradient checker and filesystem/process utilities.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sys/wait.h>
#include <string>
#include <vector>

#include "sconvnet/sconvnet.hpp"

namespace sct {

using namespace sconvnet;
namespace fs = std::filesystem;

// Hand-rolled generator; every property test draws from one of these with
// an explicit seed so failures can be replayed.
struct Gen {
    std::mt19937_64 rng;
    explicit Gen(std::uint64_t seed) : rng(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(rng); }
    std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    }
    bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

    std::vector<double> vec(std::size_t n, double lo = -1.0, double hi = 1.0) {
        std::vector<double> v(n);
        for (auto& x : v) x = uniform(lo, hi);
        return v;
    }
    // Magnitudes in [lo, hi] with random sign: keeps values away from kinks at 0.
    std::vector<double> away_from_zero(std::size_t n, double lo = 0.05, double hi = 1.0) {
        std::vector<double> v(n);
        for (auto& x : v) x = (coin() ? 1.0 : -1.0) * uniform(lo, hi);
        return v;
    }
    // Distinct values spaced at least `gap` apart (in magnitude too when
    // `positive`), shuffled; used where max-type layers must not switch
    // winners under a finite-difference step.
    std::vector<double> spaced(std::size_t n, double gap = 0.01, bool positive = false) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = 0.1 + gap * static_cast<double>(i) + uniform(0.0, gap * 0.25);
        if (!positive)
            for (auto& x : v)
                if (coin()) x = -x;
        std::shuffle(v.begin(), v.end(), rng);
        return v;
    }
    Tensor<double> tensor(Shape s, double lo = -1.0, double hi = 1.0) { return Tensor<double>(s, vec(s.size(), lo, hi)); }
};

// Direct summation, written from the definition: out[n][m][i][j] =
// b[m] + sum_u sum_h sum_w W[m][u][h][w] * x[n][u][i*s + h - pt][j*s + w - pl],
// zero outside the input. 'same' pads so that out = ceil(in / s) with the odd
// padding cell at the bottom/right.
inline Tensor<double> naive_conv(const Tensor<double>& x, const std::vector<double>& w, const std::vector<double>& b,
                                 std::size_t m_out, std::size_t kh, std::size_t kw, std::size_t s, bool same) {
    const Shape in = x.shape();
    std::size_t oh, ow;
    long pt = 0, pl = 0;
    if (same) {
        oh = (in.h + s - 1) / s;
        ow = (in.w + s - 1) / s;
        const long th = std::max<long>(0, static_cast<long>((oh - 1) * s + kh) - static_cast<long>(in.h));
        const long tw = std::max<long>(0, static_cast<long>((ow - 1) * s + kw) - static_cast<long>(in.w));
        pt = th / 2;
        pl = tw / 2;
    } else {
        oh = (in.h - kh) / s + 1;
        ow = (in.w - kw) / s + 1;
    }
    Tensor<double> out(Shape{in.n, m_out, oh, ow});
    for (std::size_t n = 0; n < in.n; ++n)
        for (std::size_t m = 0; m < m_out; ++m)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double acc = b[m];
                    for (std::size_t u = 0; u < in.c; ++u)
                        for (std::size_t h = 0; h < kh; ++h)
                            for (std::size_t q = 0; q < kw; ++q) {
                                const long r = static_cast<long>(i * s + h) - pt;
                                const long c = static_cast<long>(j * s + q) - pl;
                                if (r < 0 || c < 0 || r >= static_cast<long>(in.h) || c >= static_cast<long>(in.w))
                                    continue;
                                acc += w[((m * in.c + u) * kh + h) * kw + q] *
                                       x.at(n, u, static_cast<std::size_t>(r), static_cast<std::size_t>(c));
                            }
                    out.at(n, m, i, j) = acc;
                }
    return out;
}

// ||a - b|| / (||a|| + ||b||), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double den = std::sqrt(na) + std::sqrt(nb);
    return den == 0.0 ? 0.0 : std::sqrt(diff) / den;
}

struct GradReport {
    double input_error = 0.0;
    double param_error = 0.0;
    [[nodiscard]] double worst() const { return std::max(input_error, param_error); }
};

// Central differences of L = sum(r * layer(x)) against the layer's backward.
// `before_forward` runs ahead of every forward (dropout reseeding).
inline GradReport check_layer(Layer<double>& layer, Tensor<double> x, Gen& g, double h = 1e-5,
                              const std::function<void()>& before_forward = {}, Mode mode = Mode::Train,
                              std::size_t max_param_probes = 60) {
    const auto fwd = [&](const Tensor<double>& in) -> const Tensor<double>& {
        if (before_forward) before_forward();
        return layer.forward(in, mode);
    };
    const Shape os = layer.output_shape(x.shape());
    const auto r = g.vec(os.size(), -1.0, 1.0);
    const auto loss = [&](const Tensor<double>& in) {
        const auto& y = fwd(in);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
        return s;
    };

    fwd(x);
    const Tensor<double> dy(os, r);
    const std::vector<double> dx = layer.backward(dy).values();
    std::vector<std::vector<double>> dparams;
    for (auto& p : layer.params()) dparams.emplace_back(p.grad.begin(), p.grad.end());

    GradReport rep;
    std::vector<double> num(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double lp = loss(x);
        x[i] = keep - h;
        const double lm = loss(x);
        x[i] = keep;
        num[i] = (lp - lm) / (2 * h);
    }
    rep.input_error = relative_error(dx, num);

    std::vector<double> ana, nump;
    auto params = layer.params();
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto v = params[b].value;
        std::vector<std::size_t> probe(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) probe[i] = i;
        std::shuffle(probe.begin(), probe.end(), g.rng);
        if (probe.size() > max_param_probes) probe.resize(max_param_probes);
        for (std::size_t i : probe) {
            const double keep = v[i];
            v[i] = keep + h;
            const double lp = loss(x);
            v[i] = keep - h;
            const double lm = loss(x);
            v[i] = keep;
            nump.push_back((lp - lm) / (2 * h));
            ana.push_back(dparams[b][i]);
        }
    }
    rep.param_error = relative_error(ana, nump);
    return rep;
}

// Mean softmax cross-entropy of a whole network against labels; input and a
// sample of every parameter block are probed.
inline GradReport check_network(Network<double>& net, Tensor<double> x, const std::vector<std::size_t>& labels, Gen& g,
                                std::uint64_t dropout_seed, double h = 1e-5, std::size_t probes_per_block = 6,
                                std::size_t input_probes = 24) {
    net.set_input_grad_required(true);
    const auto loss = [&](const Tensor<double>& in) {
        net.reseed_dropout(dropout_seed);
        return softmax_cross_entropy<double>(net.forward(in, Mode::Train), labels, nullptr).mean_loss;
    };
    net.reseed_dropout(dropout_seed);
    Tensor<double> grad;
    softmax_cross_entropy<double>(net.forward(x, Mode::Train), labels, &grad);
    const std::vector<double> dx = net.backward(grad).values();
    std::vector<std::vector<double>> dparams;
    for (auto& p : net.params()) dparams.emplace_back(p.grad.begin(), p.grad.end());

    GradReport rep;
    std::vector<double> ana, num;
    for (std::size_t k = 0; k < input_probes; ++k) {
        const std::size_t i = g.index(0, x.size() - 1);
        const double keep = x[i];
        x[i] = keep + h;
        const double lp = loss(x);
        x[i] = keep - h;
        const double lm = loss(x);
        x[i] = keep;
        num.push_back((lp - lm) / (2 * h));
        ana.push_back(dx[i]);
    }
    rep.input_error = relative_error(ana, num);

    ana.clear();
    num.clear();
    auto params = net.params();
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto v = params[b].value;
        for (std::size_t k = 0; k < probes_per_block; ++k) {
            const std::size_t i = g.index(0, v.size() - 1);
            const double keep = v[i];
            v[i] = keep + h;
            const double lp = loss(x);
            v[i] = keep - h;
            const double lm = loss(x);
            v[i] = keep;
            num.push_back((lp - lm) / (2 * h));
            ana.push_back(dparams[b][i]);
        }
    }
    rep.param_error = relative_error(ana, num);
    return rep;
}

// One finite-difference case per layer kind, as required by the gradient
// criterion. Each returns the worst relative error for one seed.
struct LayerCase {
    std::string name;
    std::function<GradReport(std::uint64_t)> run;
};

inline std::vector<LayerCase> layer_cases() {
    std::vector<LayerCase> cases;
    const auto conv = [](std::string name, std::size_t cin, std::size_t cout, std::size_t kh, std::size_t kw,
                         std::size_t stride, Padding pad, Shape in) {
        return LayerCase{name, [=](std::uint64_t seed) {
                             Gen g(seed);
                             Conv2d<double> c(cin, cout, kh, kw, stride, pad);
                             std::mt19937_64 rng(seed);
                             c.init(InitScheme::Xavier, rng);
                             for (auto& b : c.bias()) b = g.uniform(-0.5, 0.5);
                             return check_layer(c, g.tensor(in), g);
                         }};
    };
    cases.push_back(conv("conv 3x3 same", 2, 3, 3, 3, 1, Padding::Same, {2, 2, 6, 5}));
    cases.push_back(conv("conv 3x3 valid", 2, 3, 3, 3, 1, Padding::Valid, {2, 2, 6, 5}));
    cases.push_back(conv("conv 3x3 stride 2", 2, 3, 3, 3, 2, Padding::Same, {2, 2, 7, 6}));
    cases.push_back(conv("conv 1x1", 3, 4, 1, 1, 1, Padding::Same, {2, 3, 4, 4}));
    cases.push_back(conv("conv full-field", 3, 4, 4, 3, 1, Padding::Valid, {2, 3, 4, 3}));
    cases.push_back({"dense", [](std::uint64_t seed) {
                         Gen g(seed);
                         Dense<double> d(12, 5);
                         std::mt19937_64 rng(seed);
                         d.init(InitScheme::Xavier, rng);
                         for (auto& b : d.bias()) b = g.uniform(-0.5, 0.5);
                         return check_layer(d, g.tensor({3, 3, 2, 2}), g);
                     }});
    cases.push_back({"batchnorm", [](std::uint64_t seed) {
                         Gen g(seed);
                         BatchNorm<double> bn(3);
                         for (auto& v : bn.gamma()) v = g.uniform(0.5, 1.5);
                         for (auto& v : bn.beta()) v = g.uniform(-0.5, 0.5);
                         return check_layer(bn, g.tensor({4, 3, 3, 2}, -2.0, 2.0), g);
                     }});
    const auto act = [](std::string name, ActivationKind k) {
        return LayerCase{name, [=](std::uint64_t seed) {
                             Gen g(seed);
                             ActivationLayer<double> a(k);
                             const Shape s{2, 3, 3, 3};
                             return check_layer(a, Tensor<double>(s, g.away_from_zero(s.size(), 0.05, 2.0)), g);
                         }};
    };
    cases.push_back(act("elu", ActivationKind::elu()));
    cases.push_back(act("relu", ActivationKind::relu()));
    cases.push_back(act("leaky relu", ActivationKind::leaky_relu(0.1)));
    cases.push_back(act("sigmoid", ActivationKind::sigmoid()));
    const auto pool = [](std::string name, PoolSpec spec, bool positive) {
        return LayerCase{name, [=](std::uint64_t seed) {
                             Gen g(seed);
                             Pool2d<double> p(spec);
                             const Shape s{2, 2, 4, 6};
                             return check_layer(p, Tensor<double>(s, g.spaced(s.size(), 0.01, positive)), g);
                         }};
    };
    cases.push_back(pool("max pool", PoolSpec::max(), false));
    cases.push_back(pool("max pool (abs)", PoolSpec::max().as_literal(), false));
    cases.push_back(pool("avg pool", PoolSpec::average(), false));
    cases.push_back(pool("avg pool (1/k)", PoolSpec::average().as_literal(), false));
    cases.push_back(pool("lp pool p=2", PoolSpec::lp(2.0), false));
    cases.push_back(pool("lp pool p=3", PoolSpec::lp(3.0, 3, 1), false));
    cases.push_back({"global average", [](std::uint64_t seed) {
                         Gen g(seed);
                         GlobalAvgPool<double> p;
                         return check_layer(p, g.tensor({2, 3, 3, 3}), g);
                     }});
    cases.push_back({"dropout", [](std::uint64_t seed) {
                         Gen g(seed);
                         Dropout<double> d(0.35);
                         return check_layer(d, g.tensor({2, 3, 4, 4}), g, 1e-5, [&] { d.reseed(seed); });
                     }});
    cases.push_back({"softmax + cross-entropy", [](std::uint64_t seed) {
                         Gen g(seed);
                         const std::size_t n = 4, classes = 6;
                         Tensor<double> z({n, classes, 1, 1}, g.vec(n * classes, -3.0, 3.0));
                         std::vector<std::size_t> y(n);
                         for (auto& v : y) v = g.index(0, classes - 1);
                         Tensor<double> grad;
                         softmax_cross_entropy<double>(z, y, &grad);
                         std::vector<double> num(z.size());
                         const double h = 1e-5;
                         for (std::size_t i = 0; i < z.size(); ++i) {
                             const double keep = z[i];
                             z[i] = keep + h;
                             const double lp = softmax_cross_entropy<double>(z, y, nullptr).mean_loss;
                             z[i] = keep - h;
                             const double lm = softmax_cross_entropy<double>(z, y, nullptr).mean_loss;
                             z[i] = keep;
                             num[i] = (lp - lm) / (2 * h);
                         }
                         GradReport r;
                         r.input_error = relative_error(grad.values(), num);
                         return r;
                     }});
    return cases;
}

// Model A in double precision, small batch, BN in training mode and dropout
// masks pinned by reseeding.
inline GradReport model_a_case(std::uint64_t seed) {
    Gen g(seed);
    auto net = models::build<double>("A");
    net.init(InitScheme::Xavier, seed);
    const std::size_t n = 4;
    Tensor<double> x({n, 1, 16, 8}, g.vec(n * 128, 0.0, 1.0));
    std::vector<std::size_t> y(n);
    for (auto& v : y) v = g.index(0, 7);
    return check_network(net, x, y, g, seed ^ 0x9e3779b97f4a7c15ull);
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        static std::size_t counter = 0;
        path = fs::temp_directory_path() /
               ("sconvnet_" + tag + "_" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()) +
                "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] std::string str(const std::string& name) const { return (path / name).string(); }
};

struct RunResult {
    int code = -1;
    std::string output;
};

// Runs a shell command, capturing stdout and stderr together.
inline RunResult run(const std::string& cmd) {
    RunResult r;
    FILE* p = popen((cmd + " 2>&1").c_str(), "r");
    if (!p) return r;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, p)) r.output += buf;
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

inline std::string slurp(const fs::path& p) { return report::read_text(p); }

}  // namespace sct
