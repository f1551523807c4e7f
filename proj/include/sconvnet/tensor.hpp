#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sconvnet/error.hpp"

namespace sconvnet {

struct Shape {
    std::size_t n = 0, c = 0, h = 0, w = 0;

    [[nodiscard]] std::size_t size() const { return n * c * h * w; }
    [[nodiscard]] std::size_t per_sample() const { return c * h * w; }
    [[nodiscard]] std::string str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }
    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense N x C x H x W array.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.size(), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape_.size())
            throw ShapeError("tensor: data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_.str());
    }

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] T* data() { return data_.data(); }
    [[nodiscard]] const T* data() const { return data_.data(); }
    [[nodiscard]] std::span<T> span() { return data_; }
    [[nodiscard]] std::span<const T> span() const { return data_; }
    [[nodiscard]] std::vector<T>& values() { return data_; }
    [[nodiscard]] const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    [[nodiscard]] std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) { return data_[offset(n, c, h, w)]; }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[offset(n, c, h, w)];
    }

    /// Reuses the allocation when possible; contents are unspecified afterwards.
    void resize(Shape shape) {
        shape_ = shape;
        data_.resize(shape.size());
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    /// Same data, new shape with equal element count.
    [[nodiscard]] Tensor reshaped(Shape shape) const& {
        if (shape.size() != size()) throw ShapeError("reshape: " + shape_.str() + " -> " + shape.str());
        return Tensor(shape, data_);
    }

private:
    Shape shape_{};
    std::vector<T> data_;
};

}  // namespace sconvnet
