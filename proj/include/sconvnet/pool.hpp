#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sconvnet/layer.hpp"

namespace sconvnet {

/// Spatial pooling over k x k windows (no padding).
///
/// Conventional mode: max is the plain window maximum and average divides the
/// window sum by k*k. Literal mode follows the pooling equations as printed:
/// max takes the maximum of |f|, and average is (1/k) * sum |f|. Lp pooling
/// is always (sum |f|^p)^(1/p).
struct PoolSpec {
    enum class Kind { Max, Average, Lp };

    Kind kind = Kind::Max;
    std::size_t window = 2;
    std::size_t stride = 2;
    double p = 2.0;
    bool literal = false;

    static PoolSpec max(std::size_t k = 2, std::size_t s = 2) { return {Kind::Max, k, s, 0.0, false}; }
    static PoolSpec average(std::size_t k = 2, std::size_t s = 2) { return {Kind::Average, k, s, 1.0, false}; }
    static PoolSpec lp(double p, std::size_t k = 2, std::size_t s = 2) { return {Kind::Lp, k, s, p, true}; }

    [[nodiscard]] PoolSpec as_literal() const {
        PoolSpec s = *this;
        s.literal = true;
        return s;
    }
};

template <typename T>
class Pool2d final : public Layer<T> {
public:
    explicit Pool2d(PoolSpec spec) : spec_(spec) {
        if (spec_.window == 0 || spec_.stride == 0) throw ParameterError("pool: window and stride must be >= 1");
        if (spec_.kind == PoolSpec::Kind::Lp && !(spec_.p >= 1.0)) throw ParameterError("pool: Lp needs p >= 1");
    }

    [[nodiscard]] LayerKind kind() const override { return LayerKind::Pool; }
    [[nodiscard]] std::string describe() const override {
        const char* names[] = {"max", "avg", "lp"};
        return std::to_string(spec_.window) + "x" + std::to_string(spec_.window) + " " +
               names[static_cast<int>(spec_.kind)] + " pool" + (spec_.literal ? " (literal)" : "");
    }
    [[nodiscard]] std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Pool2d>(*this); }

    [[nodiscard]] Shape output_shape(const Shape& in) const override {
        if (in.h < spec_.window || in.w < spec_.window)
            throw ShapeError("pool: window " + std::to_string(spec_.window) + " larger than input " +
                             std::to_string(in.h) + "x" + std::to_string(in.w));
        return {in.n, in.c, (in.h - spec_.window) / spec_.stride + 1, (in.w - spec_.window) / spec_.stride + 1};
    }

    const Tensor<T>& forward(const Tensor<T>& x, Mode) override {
        const Shape os = output_shape(x.shape());
        input_ = x;
        out_.resize(os);
        argmax_.assign(spec_.kind == PoolSpec::Kind::Max ? os.size() : 0, 0);
        const Shape in = x.shape();
        const std::size_t k = spec_.window;
        for (std::size_t nc = 0; nc < in.n * in.c; ++nc) {
            const T* src = x.data() + nc * in.h * in.w;
            for (std::size_t oy = 0; oy < os.h; ++oy)
                for (std::size_t ox = 0; ox < os.w; ++ox) {
                    const std::size_t oi = (nc * os.h + oy) * os.w + ox;
                    const std::size_t y0 = oy * spec_.stride, x0 = ox * spec_.stride;
                    out_[oi] = pool_window(src, in.w, y0, x0, k, oi);
                }
        }
        return out_;
    }

    const Tensor<T>& backward(const Tensor<T>& grad_out) override {
        const Shape in = input_.shape();
        const Shape os = output_shape(in);
        if (grad_out.shape() != os) throw ShapeError("pool backward: gradient shape mismatch");
        grad_in_.resize(in);
        grad_in_.fill(T{0});
        const std::size_t k = spec_.window;
        for (std::size_t nc = 0; nc < in.n * in.c; ++nc) {
            const T* src = input_.data() + nc * in.h * in.w;
            T* dst = grad_in_.data() + nc * in.h * in.w;
            for (std::size_t oy = 0; oy < os.h; ++oy)
                for (std::size_t ox = 0; ox < os.w; ++ox) {
                    const std::size_t oi = (nc * os.h + oy) * os.w + ox;
                    const T g = grad_out[oi];
                    const std::size_t y0 = oy * spec_.stride, x0 = ox * spec_.stride;
                    switch (spec_.kind) {
                        case PoolSpec::Kind::Max: {
                            const std::size_t idx = argmax_[oi];
                            dst[idx] += spec_.literal ? g * sign(src[idx]) : g;
                            break;
                        }
                        case PoolSpec::Kind::Average: {
                            const T scale = spec_.literal ? T{1} / static_cast<T>(k) : T{1} / static_cast<T>(k * k);
                            for (std::size_t i = 0; i < k; ++i)
                                for (std::size_t j = 0; j < k; ++j) {
                                    const std::size_t idx = (y0 + i) * in.w + x0 + j;
                                    dst[idx] += spec_.literal ? g * scale * sign(src[idx]) : g * scale;
                                }
                            break;
                        }
                        case PoolSpec::Kind::Lp: {
                            const T s = out_[oi];
                            if (s == T{0}) break;
                            const T pm1 = static_cast<T>(spec_.p - 1.0);
                            for (std::size_t i = 0; i < k; ++i)
                                for (std::size_t j = 0; j < k; ++j) {
                                    const std::size_t idx = (y0 + i) * in.w + x0 + j;
                                    const T a = std::abs(src[idx]);
                                    dst[idx] += g * sign(src[idx]) * std::pow(a / s, pm1);
                                }
                            break;
                        }
                    }
                }
        }
        return grad_in_;
    }

    [[nodiscard]] std::vector<std::uint32_t> shape_tags() const override {
        return {static_cast<std::uint32_t>(spec_.kind), static_cast<std::uint32_t>(spec_.window),
                static_cast<std::uint32_t>(spec_.stride), spec_.literal ? 1u : 0u};
    }

    [[nodiscard]] const PoolSpec& spec() const { return spec_; }

private:
    static T sign(T v) { return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0}); }

    T pool_window(const T* src, std::size_t width, std::size_t y0, std::size_t x0, std::size_t k,
                  std::size_t oi) {
        switch (spec_.kind) {
            case PoolSpec::Kind::Max: {
                std::size_t best = y0 * width + x0;
                T best_v = spec_.literal ? std::abs(src[best]) : src[best];
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::size_t idx = (y0 + i) * width + x0 + j;
                        const T v = spec_.literal ? std::abs(src[idx]) : src[idx];
                        if (v > best_v) {
                            best_v = v;
                            best = idx;
                        }
                    }
                argmax_[oi] = best;
                return best_v;
            }
            case PoolSpec::Kind::Average: {
                T s{0};
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        const T v = src[(y0 + i) * width + x0 + j];
                        s += spec_.literal ? std::abs(v) : v;
                    }
                return spec_.literal ? s / static_cast<T>(k) : s / static_cast<T>(k * k);
            }
            case PoolSpec::Kind::Lp: {
                // Scaled by the window's largest |f| so large p does not overflow.
                T m{0};
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t j = 0; j < k; ++j) m = std::max(m, std::abs(src[(y0 + i) * width + x0 + j]));
                if (m == T{0}) return T{0};
                const T p = static_cast<T>(spec_.p);
                T s{0};
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t j = 0; j < k; ++j) s += std::pow(std::abs(src[(y0 + i) * width + x0 + j]) / m, p);
                return m * std::pow(s, T{1} / p);
            }
        }
        return T{0};
    }

    PoolSpec spec_;
    Tensor<T> input_, out_, grad_in_;
    std::vector<std::size_t> argmax_;
};

/// Mean over each channel's spatial extent; output (N, C, 1, 1).
template <typename T>
class GlobalAvgPool final : public Layer<T> {
public:
    [[nodiscard]] LayerKind kind() const override { return LayerKind::GlobalAvgPool; }
    [[nodiscard]] std::string describe() const override { return "global average"; }
    [[nodiscard]] std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
    [[nodiscard]] Shape output_shape(const Shape& in) const override { return {in.n, in.c, 1, 1}; }

    const Tensor<T>& forward(const Tensor<T>& x, Mode) override {
        in_shape_ = x.shape();
        out_.resize(output_shape(in_shape_));
        const std::size_t plane = in_shape_.h * in_shape_.w;
        for (std::size_t i = 0; i < in_shape_.n * in_shape_.c; ++i) {
            T s{0};
            for (std::size_t p = 0; p < plane; ++p) s += x[i * plane + p];
            out_[i] = s / static_cast<T>(plane);
        }
        return out_;
    }

    const Tensor<T>& backward(const Tensor<T>& grad_out) override {
        grad_in_.resize(in_shape_);
        const std::size_t plane = in_shape_.h * in_shape_.w;
        for (std::size_t i = 0; i < in_shape_.n * in_shape_.c; ++i)
            for (std::size_t p = 0; p < plane; ++p) grad_in_[i * plane + p] = grad_out[i] / static_cast<T>(plane);
        return grad_in_;
    }

private:
    Shape in_shape_{};
    Tensor<T> out_, grad_in_;
};

}  // namespace sconvnet
