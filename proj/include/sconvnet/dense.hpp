#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "sconvnet/layer.hpp"

namespace sconvnet {

/// Fully connected layer over the flattened C*H*W features of each sample.
/// Output shape is (N, out, 1, 1).
template <typename T>
class Dense final : public Layer<T> {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MapM = Eigen::Map<Mat>;
    using CMapM = Eigen::Map<const Mat>;

public:
    Dense(std::size_t in_features, std::size_t out_features)
        : in_(in_features), out_(out_features), weight_(in_features * out_features, T{0}), bias_(out_features, T{0}),
          weight_grad_(weight_.size(), T{0}), bias_grad_(out_features, T{0}) {
        if (in_ == 0 || out_ == 0) throw ParameterError("dense: feature counts must be positive");
    }

    [[nodiscard]] LayerKind kind() const override { return LayerKind::Dense; }
    [[nodiscard]] std::string describe() const override {
        return "dense " + std::to_string(in_) + "->" + std::to_string(out_);
    }
    [[nodiscard]] std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dense>(*this); }

    [[nodiscard]] Shape output_shape(const Shape& in) const override {
        if (in.per_sample() != in_)
            throw ShapeError("dense: expected " + std::to_string(in_) + " input features, got " +
                             std::to_string(in.per_sample()));
        return {in.n, out_, 1, 1};
    }

    const Tensor<T>& forward(const Tensor<T>& x, Mode) override {
        const Shape os = output_shape(x.shape());
        input_ = x;
        y_.resize(os);
        MapM y(y_.data(), os.n, out_);
        y.noalias() = CMapM(x.data(), os.n, in_) * CMapM(weight_.data(), out_, in_).transpose();
        y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.data(), out_);
        return y_;
    }

    const Tensor<T>& backward(const Tensor<T>& grad_out) override {
        const std::size_t n = input_.shape().n;
        if (grad_out.size() != n * out_) throw ShapeError("dense backward: gradient size mismatch");
        CMapM dy(grad_out.data(), n, out_);
        MapM(weight_grad_.data(), out_, in_).noalias() = dy.transpose() * CMapM(input_.data(), n, in_);
        std::fill(bias_grad_.begin(), bias_grad_.end(), T{0});
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < out_; ++j) bias_grad_[j] += grad_out.data()[r * out_ + j];
        grad_in_.resize(input_.shape());
        if (!this->input_grad_required_) {
            grad_in_.fill(T{0});
            return grad_in_;
        }
        MapM(grad_in_.data(), n, in_).noalias() = dy * CMapM(weight_.data(), out_, in_);
        return grad_in_;
    }

    [[nodiscard]] std::vector<ParamView<T>> params() override {
        return {{weight_, weight_grad_}, {bias_, bias_grad_}};
    }
    [[nodiscard]] std::vector<std::uint32_t> shape_tags() const override {
        return {static_cast<std::uint32_t>(out_), static_cast<std::uint32_t>(in_)};
    }
    void init(InitScheme scheme, std::mt19937_64& rng) override {
        detail::init_weights<T>(weight_, bias_, scheme, in_, out_, rng);
    }

    [[nodiscard]] std::vector<T>& weight() { return weight_; }
    [[nodiscard]] std::vector<T>& bias() { return bias_; }
    [[nodiscard]] const std::vector<T>& weight_grad() const { return weight_grad_; }
    [[nodiscard]] const std::vector<T>& bias_grad() const { return bias_grad_; }

private:
    std::size_t in_, out_;
    std::vector<T> weight_, bias_, weight_grad_, bias_grad_;
    Tensor<T> input_, y_, grad_in_;
};

}  // namespace sconvnet
