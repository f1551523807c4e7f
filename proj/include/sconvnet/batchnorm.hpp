#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sconvnet/layer.hpp"

namespace sconvnet {

/// Per-channel batch normalisation over (N, H, W).
///
/// Train mode standardises with the biased batch variance and updates the
/// running estimates as running = momentum * running + (1 - momentum) * batch
/// (running variance uses the unbiased batch variance). Eval mode uses the
/// running estimates only.
template <typename T>
class BatchNorm final : public Layer<T> {
public:
    explicit BatchNorm(std::size_t channels, double momentum = 0.9, double epsilon = 1e-5)
        : channels_(channels), momentum_(momentum), epsilon_(epsilon), gamma_(channels, T{1}), beta_(channels, T{0}),
          gamma_grad_(channels, T{0}), beta_grad_(channels, T{0}), running_mean_(channels, T{0}),
          running_var_(channels, T{1}) {
        if (channels == 0) throw ParameterError("batchnorm: channel count must be positive");
        if (!(epsilon > 0.0)) throw ParameterError("batchnorm: epsilon must be > 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("batchnorm: momentum must lie in [0, 1)");
    }

    [[nodiscard]] LayerKind kind() const override { return LayerKind::BatchNorm; }
    [[nodiscard]] std::string describe() const override { return "batchnorm " + std::to_string(channels_); }
    [[nodiscard]] std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNorm>(*this); }

    [[nodiscard]] Shape output_shape(const Shape& in) const override {
        if (in.c != channels_)
            throw ShapeError("batchnorm: expected " + std::to_string(channels_) + " channels, got " +
                             std::to_string(in.c));
        return in;
    }

    const Tensor<T>& forward(const Tensor<T>& x, Mode mode) override {
        const Shape s = output_shape(x.shape());
        mode_ = mode;
        in_shape_ = s;
        const std::size_t plane = s.h * s.w;
        const std::size_t m = s.n * plane;
        out_.resize(s);
        xhat_.resize(s);
        inv_std_.assign(channels_, T{0});

        if (mode == Mode::Train) {
            if (s.n < 2) throw ConfigError("batchnorm: train mode needs a batch of at least 2 samples");
            for (std::size_t c = 0; c < channels_; ++c) {
                // plane sums in T, accumulated across planes in double
                double sum = 0.0;
                for (std::size_t n = 0; n < s.n; ++n) {
                    const T* px = plane_ptr(x, n, c);
                    T acc{0};
                    for (std::size_t i = 0; i < plane; ++i) acc += px[i];
                    sum += acc;
                }
                const double mean = sum / static_cast<double>(m);
                const T mt = static_cast<T>(mean);
                double sq = 0.0;
                for (std::size_t n = 0; n < s.n; ++n) {
                    const T* px = plane_ptr(x, n, c);
                    T acc{0};
                    for (std::size_t i = 0; i < plane; ++i) acc += (px[i] - mt) * (px[i] - mt);
                    sq += acc;
                }
                const double var = sq / static_cast<double>(m);
                normalize_channel(x, c, mean, var);
                running_mean_[c] = static_cast<T>(momentum_ * running_mean_[c] + (1.0 - momentum_) * mean);
                const double unbiased = sq / static_cast<double>(m - 1);
                running_var_[c] = static_cast<T>(momentum_ * running_var_[c] + (1.0 - momentum_) * unbiased);
            }
        } else {
            for (std::size_t c = 0; c < channels_; ++c)
                normalize_channel(x, c, static_cast<double>(running_mean_[c]), static_cast<double>(running_var_[c]));
        }
        return out_;
    }

    const Tensor<T>& backward(const Tensor<T>& grad_out) override {
        const Shape s = in_shape_;
        if (grad_out.shape() != s) throw ShapeError("batchnorm backward: gradient shape mismatch");
        const double m = static_cast<double>(s.n * s.h * s.w);
        grad_in_.resize(s);
        for (std::size_t c = 0; c < channels_; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            const std::size_t plane = s.h * s.w;
            for (std::size_t n = 0; n < s.n; ++n) {
                const T* dy = plane_ptr(grad_out, n, c);
                const T* xh = plane_ptr(xhat_, n, c);
                T a{0}, b{0};
                for (std::size_t i = 0; i < plane; ++i) {
                    a += dy[i];
                    b += dy[i] * xh[i];
                }
                sum_dy += a;
                sum_dy_xhat += b;
            }
            gamma_grad_[c] = static_cast<T>(sum_dy_xhat);
            beta_grad_[c] = static_cast<T>(sum_dy);
            const double scale = static_cast<double>(gamma_[c]) * inv_std_[c];
            if (mode_ == Mode::Train) {
                // dx = g*inv/m * (m*dy - sum(dy) - xhat*sum(dy*xhat))
                const T a = static_cast<T>(scale), b = static_cast<T>(scale * sum_dy / m),
                        k = static_cast<T>(scale * sum_dy_xhat / m);
                for (std::size_t n = 0; n < s.n; ++n) {
                    const T* dy = plane_ptr(grad_out, n, c);
                    const T* xh = plane_ptr(xhat_, n, c);
                    T* dx = plane_ptr(grad_in_, n, c);
                    for (std::size_t i = 0; i < plane; ++i) dx[i] = a * dy[i] - b - k * xh[i];
                }
            } else {
                const T a = static_cast<T>(scale);
                for (std::size_t n = 0; n < s.n; ++n) {
                    const T* dy = plane_ptr(grad_out, n, c);
                    T* dx = plane_ptr(grad_in_, n, c);
                    for (std::size_t i = 0; i < plane; ++i) dx[i] = a * dy[i];
                }
            }
        }
        return grad_in_;
    }

    [[nodiscard]] std::vector<ParamView<T>> params() override {
        return {{gamma_, gamma_grad_}, {beta_, beta_grad_}};
    }
    [[nodiscard]] std::vector<std::span<T>> buffers() override { return {running_mean_, running_var_}; }
    [[nodiscard]] std::vector<std::uint32_t> shape_tags() const override {
        return {static_cast<std::uint32_t>(channels_)};
    }
    void init(InitScheme, std::mt19937_64&) override {
        std::fill(gamma_.begin(), gamma_.end(), T{1});
        std::fill(beta_.begin(), beta_.end(), T{0});
        std::fill(running_mean_.begin(), running_mean_.end(), T{0});
        std::fill(running_var_.begin(), running_var_.end(), T{1});
    }

    [[nodiscard]] std::vector<T>& gamma() { return gamma_; }
    [[nodiscard]] std::vector<T>& beta() { return beta_; }
    [[nodiscard]] const std::vector<T>& running_mean() const { return running_mean_; }
    [[nodiscard]] const std::vector<T>& running_var() const { return running_var_; }

private:
    // Plain loops throughout: Eigen maps over planes take a scalar peel whose
    // length depends on the address, which made results vary run to run.
    const T* plane_ptr(const Tensor<T>& t, std::size_t n, std::size_t c) const {
        return t.data() + (n * channels_ + c) * in_shape_.h * in_shape_.w;
    }
    T* plane_ptr(Tensor<T>& t, std::size_t n, std::size_t c) const {
        return t.data() + (n * channels_ + c) * in_shape_.h * in_shape_.w;
    }

    void normalize_channel(const Tensor<T>& x, std::size_t c, double mean, double var) {
        const double inv = 1.0 / std::sqrt(var + epsilon_);
        inv_std_[c] = static_cast<T>(inv);
        const T g = gamma_[c], b = beta_[c], mt = static_cast<T>(mean), it = static_cast<T>(inv);
        const std::size_t plane = in_shape_.h * in_shape_.w;
        for (std::size_t n = 0; n < in_shape_.n; ++n) {
            const T* px = plane_ptr(x, n, c);
            T* xh = plane_ptr(xhat_, n, c);
            T* y = plane_ptr(out_, n, c);
            for (std::size_t i = 0; i < plane; ++i) {
                xh[i] = (px[i] - mt) * it;
                y[i] = g * xh[i] + b;
            }
        }
    }

    std::size_t channels_;
    double momentum_, epsilon_;
    std::vector<T> gamma_, beta_, gamma_grad_, beta_grad_;
    std::vector<T> running_mean_, running_var_;

    Mode mode_ = Mode::Eval;
    Shape in_shape_{};
    std::vector<T> inv_std_;
    Tensor<T> out_, xhat_, grad_in_;
};

}  // namespace sconvnet
