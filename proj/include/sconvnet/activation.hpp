#pragma once

#include <cmath>
#include <string>

#include "sconvnet/error.hpp"

namespace sconvnet {

/// Point-wise non-linearity. `param` is alpha for ELU and the negative slope
/// for leaky ReLU; it is ignored by the other kinds.
struct ActivationKind {
    enum class Type { Elu, Relu, LeakyRelu, Sigmoid, Identity };

    Type type = Type::Elu;
    double param = 1.0;

    static ActivationKind elu(double alpha = 1.0) {
        if (!(alpha > 0.0)) throw ParameterError("ELU alpha must be > 0");
        return {Type::Elu, alpha};
    }
    static ActivationKind relu() { return {Type::Relu, 0.0}; }
    static ActivationKind leaky_relu(double slope = 0.01) {
        if (!(slope > 0.0 && slope < 1.0)) throw ParameterError("leaky ReLU slope must lie in (0, 1)");
        return {Type::LeakyRelu, slope};
    }
    static ActivationKind sigmoid() { return {Type::Sigmoid, 0.0}; }
    static ActivationKind identity() { return {Type::Identity, 0.0}; }

    [[nodiscard]] std::string name() const {
        switch (type) {
            case Type::Elu: return "elu";
            case Type::Relu: return "relu";
            case Type::LeakyRelu: return "leaky_relu";
            case Type::Sigmoid: return "sigmoid";
            case Type::Identity: return "identity";
        }
        return "?";
    }

    static ActivationKind parse(const std::string& s) {
        if (s == "elu") return elu();
        if (s == "relu") return relu();
        if (s == "leaky_relu" || s == "leaky-relu" || s == "lrelu") return leaky_relu();
        if (s == "sigmoid") return sigmoid();
        if (s == "identity" || s == "linear") return identity();
        throw ParameterError("unknown activation '" + s + "'");
    }

    friend bool operator==(const ActivationKind&, const ActivationKind&) = default;
};

template <typename T>
[[nodiscard]] inline T activation_apply(const ActivationKind& k, T x) {
    switch (k.type) {
        case ActivationKind::Type::Elu:
            return x < T{0} ? static_cast<T>(k.param) * (std::exp(x) - T{1}) : x;
        case ActivationKind::Type::Relu: return x < T{0} ? T{0} : x;
        case ActivationKind::Type::LeakyRelu: return x < T{0} ? static_cast<T>(k.param) * x : x;
        case ActivationKind::Type::Sigmoid: return T{1} / (T{1} + std::exp(-x));
        case ActivationKind::Type::Identity: return x;
    }
    return x;
}

/// d activation / dx evaluated at x. ReLU and leaky ReLU use the right
/// derivative at 0.
template <typename T>
[[nodiscard]] inline T activation_grad(const ActivationKind& k, T x) {
    switch (k.type) {
        case ActivationKind::Type::Elu: return x < T{0} ? static_cast<T>(k.param) * std::exp(x) : T{1};
        case ActivationKind::Type::Relu: return x < T{0} ? T{0} : T{1};
        case ActivationKind::Type::LeakyRelu: return x < T{0} ? static_cast<T>(k.param) : T{1};
        case ActivationKind::Type::Sigmoid: {
            const T s = T{1} / (T{1} + std::exp(-x));
            return s * (T{1} - s);
        }
        case ActivationKind::Type::Identity: return T{1};
    }
    return T{1};
}

}  // namespace sconvnet
