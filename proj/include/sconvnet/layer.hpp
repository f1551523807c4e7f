#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sconvnet/tensor.hpp"

namespace sconvnet {

enum class Mode { Train, Eval };

enum class InitScheme { Xavier, He };

/// Tags written to checkpoints. Values are part of the file format.
enum class LayerKind : std::uint32_t {
    Conv = 1,
    Dense = 2,
    BatchNorm = 3,
    Activation = 4,
    Pool = 5,
    Dropout = 6,
    GlobalAvgPool = 7,
};

/// A trainable parameter block and its gradient of equal length.
template <typename T>
struct ParamView {
    std::span<T> value;
    std::span<T> grad;
};

/// Base class of every network stage. forward() and backward() return
/// references to buffers owned by the layer; they stay valid until the next
/// call on the same layer. backward() must follow a forward() on the same
/// input and overwrites (does not accumulate) parameter gradients.
template <typename T>
class Layer {
public:
    virtual ~Layer() = default;

    [[nodiscard]] virtual LayerKind kind() const = 0;
    [[nodiscard]] virtual std::string describe() const = 0;
    [[nodiscard]] virtual Shape output_shape(const Shape& in) const = 0;
    [[nodiscard]] virtual std::unique_ptr<Layer> clone() const = 0;

    virtual const Tensor<T>& forward(const Tensor<T>& x, Mode mode) = 0;
    virtual const Tensor<T>& backward(const Tensor<T>& grad_out) = 0;

    [[nodiscard]] virtual std::vector<ParamView<T>> params() { return {}; }
    /// Non-trainable state saved with checkpoints (BN running statistics).
    [[nodiscard]] virtual std::vector<std::span<T>> buffers() { return {}; }
    /// Integers describing the layer's configuration, written to checkpoints.
    [[nodiscard]] virtual std::vector<std::uint32_t> shape_tags() const { return {}; }

    virtual void init(InitScheme /*scheme*/, std::mt19937_64& /*rng*/) {}

    [[nodiscard]] std::size_t param_count() {
        std::size_t n = 0;
        for (const auto& p : params()) n += p.value.size();
        return n;
    }

    /// The first layer of a network does not need dL/dx; skipping it saves a GEMM.
    void set_input_grad_required(bool required) { input_grad_required_ = required; }
    [[nodiscard]] bool input_grad_required() const { return input_grad_required_; }

protected:
    bool input_grad_required_ = true;
};

namespace detail {

template <typename T>
void fill_xavier(std::span<T> w, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : w) v = static_cast<T>(dist(rng));
}

template <typename T>
void fill_he(std::span<T> w, std::size_t fan_in, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (auto& v : w) v = static_cast<T>(dist(rng));
}

template <typename T>
void init_weights(std::span<T> w, std::span<T> bias, InitScheme scheme, std::size_t fan_in,
                  std::size_t fan_out, std::mt19937_64& rng) {
    if (scheme == InitScheme::Xavier)
        fill_xavier(w, fan_in, fan_out, rng);
    else
        fill_he(w, fan_in, rng);
    for (auto& b : bias) b = T{0};
}

}  // namespace detail

}  // namespace sconvnet
