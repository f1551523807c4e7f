#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sconvnet/tensor.hpp"

namespace sconvnet {

inline constexpr double kProbabilityFloor = 1e-12;

/// Max-subtracted softmax of one score vector.
template <typename T>
[[nodiscard]] std::vector<T> softmax(std::span<const T> logits) {
    std::vector<T> p(logits.size());
    if (logits.empty()) return p;
    const T m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        p[j] = static_cast<T>(std::exp(static_cast<double>(logits[j] - m)));
        sum += p[j];
    }
    for (auto& v : p) v = static_cast<T>(v / sum);
    return p;
}

template <typename T>
[[nodiscard]] std::vector<T> softmax(const std::vector<T>& logits) {
    return softmax(std::span<const T>(logits));
}

/// -ln p[label] with p clamped below at 1e-12. `label` is a 0-based class index.
template <typename T>
[[nodiscard]] double cross_entropy(std::span<const T> probabilities, std::size_t label) {
    if (label >= probabilities.size())
        throw ParameterError("cross_entropy: label " + std::to_string(label) + " outside " +
                             std::to_string(probabilities.size()) + " classes");
    return -std::log(std::max(static_cast<double>(probabilities[label]), kProbabilityFloor));
}

template <typename T>
[[nodiscard]] double cross_entropy(const std::vector<T>& probabilities, std::size_t label) {
    return cross_entropy(std::span<const T>(probabilities), label);
}

/// Index of the largest entry; ties go to the lowest index.
template <typename T>
[[nodiscard]] std::size_t predict(std::span<const T> scores) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < scores.size(); ++j)
        if (scores[j] > scores[best]) best = j;
    return best;
}

template <typename T>
[[nodiscard]] std::size_t predict(const std::vector<T>& scores) {
    return predict(std::span<const T>(scores));
}

struct BatchLoss {
    double mean_loss = 0.0;
    double total_loss = 0.0;
};

/// Softmax + cross-entropy over a (N, G, 1, 1) logit batch. Writes the
/// gradient of the mean loss w.r.t. the logits, (softmax - onehot) / N, into
/// `grad` and the class probabilities into `probs` when non-null.
template <typename T>
BatchLoss softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels, Tensor<T>* grad,
                                Tensor<T>* probs = nullptr) {
    const std::size_t n = logits.shape().n;
    const std::size_t g = logits.shape().per_sample();
    if (labels.size() != n) throw ShapeError("loss: label count does not match batch size");
    if (grad) grad->resize(logits.shape());
    if (probs) probs->resize(logits.shape());
    BatchLoss out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = softmax(std::span<const T>(logits.data() + i * g, g));
        out.total_loss += cross_entropy(std::span<const T>(p), labels[i]);
        if (grad) {
            for (std::size_t j = 0; j < g; ++j)
                (*grad)[i * g + j] = static_cast<T>((p[j] - (j == labels[i] ? T{1} : T{0})) / static_cast<T>(n));
        }
        if (probs) std::copy(p.begin(), p.end(), probs->data() + i * g);
    }
    out.mean_loss = n ? out.total_loss / static_cast<double>(n) : 0.0;
    return out;
}

}  // namespace sconvnet
