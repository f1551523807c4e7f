#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sconvnet/activation.hpp"
#include "sconvnet/layer.hpp"

namespace sconvnet {

template <typename T>
class ActivationLayer final : public Layer<T> {
public:
    explicit ActivationLayer(ActivationKind kind) : kind_(kind) {}

    [[nodiscard]] LayerKind kind() const override { return LayerKind::Activation; }
    [[nodiscard]] std::string describe() const override { return kind_.name(); }
    [[nodiscard]] std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ActivationLayer>(*this); }
    [[nodiscard]] Shape output_shape(const Shape& in) const override { return in; }

    const Tensor<T>& forward(const Tensor<T>& x, Mode) override {
        out_.resize(x.shape());
        const T a = static_cast<T>(kind_.param);
        const std::size_t n = x.size();
        switch (kind_.type) {
            // ELU backward reads the output, so the input is not kept
            case ActivationKind::Type::Elu:
                blockwise(x.data(), out_.data(), n, [a](const auto& v) { return v.max(T{0}) + a * (v.min(T{0}).exp() - T{1}); });
                break;
            case ActivationKind::Type::Relu:
                input_ = x;
                blockwise(x.data(), out_.data(), n, [](const auto& v) { return v.max(T{0}); });
                break;
            case ActivationKind::Type::LeakyRelu:
                input_ = x;
                blockwise(x.data(), out_.data(), n, [a](const auto& v) { return v.max(T{0}) + a * v.min(T{0}); });
                break;
            case ActivationKind::Type::Sigmoid:
                blockwise(x.data(), out_.data(), n, [](const auto& v) { return T{1} / (T{1} + (-v).exp()); });
                break;
            case ActivationKind::Type::Identity: std::copy(x.values().begin(), x.values().end(), out_.values().begin()); break;
        }
        return out_;
    }

    const Tensor<T>& backward(const Tensor<T>& grad_out) override {
        if (grad_out.size() != out_.size()) throw ShapeError("activation backward: size mismatch");
        grad_in_.resize(out_.shape());
        const auto dy = arr(grad_out);
        const auto y = arr(out_);
        auto dx = arr(grad_in_);
        const T a = static_cast<T>(kind_.param);
        switch (kind_.type) {
            // alpha * e^x == f(x) + alpha on the negative branch
            case ActivationKind::Type::Elu: {
                const T* __restrict__ g = grad_out.data();
                const T* __restrict__ o = out_.data();
                T* __restrict__ d = grad_in_.data();
                // 0/1 masks instead of ternaries keep these loops vectorised
                for (std::size_t i = 0; i < out_.size(); ++i) {
                    const T m = static_cast<T>(o[i] < T{0});
                    d[i] = g[i] * (m * (o[i] + a) + (T{1} - m));
                }
                break;
            }
            case ActivationKind::Type::Relu: {
                const T* __restrict__ g = grad_out.data();
                const T* __restrict__ in = input_.data();
                T* __restrict__ d = grad_in_.data();
                for (std::size_t i = 0; i < out_.size(); ++i) d[i] = g[i] * static_cast<T>(in[i] >= T{0});
                break;
            }
            case ActivationKind::Type::LeakyRelu: {
                const T* __restrict__ g = grad_out.data();
                const T* __restrict__ in = input_.data();
                T* __restrict__ d = grad_in_.data();
                for (std::size_t i = 0; i < out_.size(); ++i) {
                    const T m = static_cast<T>(in[i] < T{0});
                    d[i] = g[i] * (m * a + (T{1} - m));
                }
                break;
            }
            case ActivationKind::Type::Sigmoid: dx = dy * y * (T{1} - y); break;
            case ActivationKind::Type::Identity: dx = dy; break;
        }
        return grad_in_;
    }

    [[nodiscard]] std::vector<std::uint32_t> shape_tags() const override {
        return {static_cast<std::uint32_t>(kind_.type)};
    }

    [[nodiscard]] const ActivationKind& activation() const { return kind_; }

private:
    // Evaluates f over fixed aligned blocks (zero padded) so every element
    // goes through the same packet code whatever the caller's alignment.
    // A plain Map would peel a scalar head whose exp() rounds differently.
    template <typename F>
    static void blockwise(const T* src, T* dst, std::size_t n, F f) {
        constexpr std::size_t B = 256;
        using Block = Eigen::Array<T, static_cast<int>(B), 1>;
        alignas(64) T in[B];
        alignas(64) T out[B];
        const Eigen::Map<const Block, Eigen::Aligned64> vin(in);
        Eigen::Map<Block, Eigen::Aligned64> vout(out);
        for (std::size_t i = 0; i < n; i += B) {
            const std::size_t m = std::min(B, n - i);
            std::copy(src + i, src + i + m, in);
            std::fill(in + m, in + B, T{0});
            vout = f(vin);
            std::copy(out, out + m, dst + i);
        }
    }

    using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
    static Eigen::Map<const Arr> arr(const Tensor<T>& t) {
        return {t.data(), static_cast<Eigen::Index>(t.size())};
    }
    static Eigen::Map<Arr> arr(Tensor<T>& t) { return {t.data(), static_cast<Eigen::Index>(t.size())}; }

    ActivationKind kind_;
    Tensor<T> input_, out_, grad_in_;
};

/// Inverted dropout: in training each unit is zeroed with probability p and
/// survivors are scaled by 1/(1-p); evaluation is the identity.
template <typename T>
class Dropout final : public Layer<T> {
public:
    explicit Dropout(double p, std::uint64_t seed = 0) : p_(p), rng_(seed) {
        if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: p must lie in [0, 1)");
    }

    [[nodiscard]] LayerKind kind() const override { return LayerKind::Dropout; }
    [[nodiscard]] std::string describe() const override { return "dropout " + std::to_string(p_); }
    [[nodiscard]] std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dropout>(*this); }
    [[nodiscard]] Shape output_shape(const Shape& in) const override { return in; }

    void reseed(std::uint64_t seed) { rng_.seed(seed); }
    [[nodiscard]] double probability() const { return p_; }

    const Tensor<T>& forward(const Tensor<T>& x, Mode mode) override {
        out_.resize(x.shape());
        active_ = mode == Mode::Train && p_ > 0.0;
        if (!active_) {
            std::copy(x.values().begin(), x.values().end(), out_.values().begin());
            return out_;
        }
        mask_.resize(x.size());
        const T keep_scale = static_cast<T>(1.0 / (1.0 - p_));
        // Each 64-bit draw yields two 32-bit uniforms; a unit is dropped when
        // its uniform falls below p * 2^32.
        const auto threshold = static_cast<std::uint64_t>(std::llround(p_ * 4294967296.0));
        words_.resize(x.size() + 1);
        auto rng = rng_;  // a local engine keeps its state in registers
        for (std::size_t i = 0; i < x.size(); i += 2) {
            const std::uint64_t r = rng();
            words_[i] = static_cast<std::uint32_t>(r);
            words_[i + 1] = static_cast<std::uint32_t>(r >> 32);
        }
        rng_ = rng;
        const auto thr = static_cast<std::uint32_t>(std::min<std::uint64_t>(threshold, 0xffffffffu));
        for (std::size_t i = 0; i < x.size(); ++i) mask_[i] = words_[i] >= thr ? keep_scale : T{0};
        for (std::size_t i = 0; i < x.size(); ++i) out_[i] = x[i] * mask_[i];
        return out_;
    }

    const Tensor<T>& backward(const Tensor<T>& grad_out) override {
        grad_in_.resize(grad_out.shape());
        if (!active_) {
            std::copy(grad_out.values().begin(), grad_out.values().end(), grad_in_.values().begin());
            return grad_in_;
        }
        for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in_[i] = grad_out[i] * mask_[i];
        return grad_in_;
    }

private:
    double p_;
    std::mt19937_64 rng_;
    bool active_ = false;
    std::vector<T> mask_;
    std::vector<std::uint32_t> words_;
    Tensor<T> out_, grad_in_;
};

}  // namespace sconvnet
