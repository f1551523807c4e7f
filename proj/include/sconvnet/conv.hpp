#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "sconvnet/layer.hpp"

namespace sconvnet {

enum class Padding { Same, Valid };

/// Output extent and leading padding of a strided convolution.
/// Same: out = ceil(in / stride), total padding split with the extra row at
/// the bottom/right. Valid: out = (in - k) / stride + 1.
struct ConvGeometry {
    std::size_t out_h = 0, out_w = 0;
    std::size_t pad_top = 0, pad_left = 0;

    static ConvGeometry compute(std::size_t in_h, std::size_t in_w, std::size_t kh, std::size_t kw,
                                std::size_t stride, Padding padding) {
        if (stride == 0) throw ParameterError("conv: stride must be >= 1");
        ConvGeometry g;
        if (padding == Padding::Same) {
            if (in_h == 0 || in_w == 0) throw ShapeError("conv: empty input");
            g.out_h = (in_h + stride - 1) / stride;
            g.out_w = (in_w + stride - 1) / stride;
            const auto total = [&](std::size_t out, std::size_t k, std::size_t in) {
                const std::size_t need = (out - 1) * stride + k;
                return need > in ? need - in : std::size_t{0};
            };
            g.pad_top = total(g.out_h, kh, in_h) / 2;
            g.pad_left = total(g.out_w, kw, in_w) / 2;
        } else {
            if (in_h < kh || in_w < kw)
                throw ShapeError("conv: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                 " does not fit a " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                                 " input without padding");
            g.out_h = (in_h - kh) / stride + 1;
            g.out_w = (in_w - kw) / stride + 1;
        }
        return g;
    }
};

/// 2-D cross-correlation with bias. Weights are laid out (out, in, kh, kw).
template <typename T>
class Conv2d final : public Layer<T> {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MapM = Eigen::Map<Mat>;
    using CMapM = Eigen::Map<const Mat>;

public:
    Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w,
           std::size_t stride = 1, Padding padding = Padding::Same)
        : in_c_(in_channels), out_c_(out_channels), kh_(kernel_h), kw_(kernel_w), stride_(stride),
          padding_(padding), weight_(out_channels * in_channels * kernel_h * kernel_w, T{0}),
          bias_(out_channels, T{0}), weight_grad_(weight_.size(), T{0}), bias_grad_(out_channels, T{0}) {
        if (in_c_ == 0 || out_c_ == 0 || kh_ == 0 || kw_ == 0)
            throw ParameterError("conv: channel counts and kernel extent must be positive");
        if (stride_ == 0) throw ParameterError("conv: stride must be >= 1");
    }

    [[nodiscard]] LayerKind kind() const override { return LayerKind::Conv; }
    [[nodiscard]] std::string describe() const override {
        return std::to_string(kh_) + "x" + std::to_string(kw_) + " conv " + std::to_string(in_c_) + "->" +
               std::to_string(out_c_) + (stride_ > 1 ? " stride " + std::to_string(stride_) : "") +
               (padding_ == Padding::Same ? " same" : " valid");
    }
    [[nodiscard]] std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }

    [[nodiscard]] Shape output_shape(const Shape& in) const override {
        check_input(in);
        const auto g = ConvGeometry::compute(in.h, in.w, kh_, kw_, stride_, padding_);
        return {in.n, out_c_, g.out_h, g.out_w};
    }

    // One im2col + GEMM per sample: the column buffer stays in cache and the
    // (out, plane) product is already the sample's NCHW output.
    const Tensor<T>& forward(const Tensor<T>& x, Mode) override {
        const Shape in = x.shape();
        const Shape os = output_shape(in);
        geom_ = ConvGeometry::compute(in.h, in.w, kh_, kw_, stride_, padding_);
        in_shape_ = in;
        input_ = x;
        const std::size_t k = patch_size();
        const std::size_t plane = os.h * os.w;
        cols_.resize(k * plane);
        out_.resize(os);
        CMapM w(weight_.data(), out_c_, k);
        const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias_.data(), out_c_);
        for (std::size_t n = 0; n < in.n; ++n) {
            im2col(input_, n);
            MapM y(out_.data() + n * out_c_ * plane, out_c_, plane);
            y.noalias() = w * CMapM(cols_.data(), k, plane);
            y.colwise() += b;
        }
        return out_;
    }

    const Tensor<T>& backward(const Tensor<T>& grad_out) override {
        const Shape os = output_shape(in_shape_);
        if (grad_out.shape() != os) throw ShapeError("conv backward: gradient shape " + grad_out.shape().str() +
                                                     " does not match output " + os.str());
        const std::size_t k = patch_size();
        const std::size_t plane = os.h * os.w;
        MapM dw(weight_grad_.data(), out_c_, k);
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(bias_grad_.data(), out_c_);
        dw.setZero();
        db.setZero();
        grad_in_.resize(in_shape_);
        grad_in_.fill(T{0});
        dcols_.resize(k * plane);
        CMapM w(weight_.data(), out_c_, k);
        for (std::size_t n = 0; n < os.n; ++n) {
            CMapM dy(grad_out.data() + n * out_c_ * plane, out_c_, plane);
            im2col(input_, n);
            dw.noalias() += dy * CMapM(cols_.data(), k, plane).transpose();
            for (std::size_t m = 0; m < out_c_; ++m) {  // fixed order, see batchnorm
                const T* row = grad_out.data() + (n * out_c_ + m) * plane;
                T acc{0};
                for (std::size_t i = 0; i < plane; ++i) acc += row[i];
                db[static_cast<Eigen::Index>(m)] += acc;
            }
            if (this->input_grad_required_) {
                MapM(dcols_.data(), k, plane).noalias() = w.transpose() * dy;
                col2im(n);
            }
        }
        return grad_in_;
    }

    [[nodiscard]] std::vector<ParamView<T>> params() override {
        return {{weight_, weight_grad_}, {bias_, bias_grad_}};
    }

    [[nodiscard]] std::vector<std::uint32_t> shape_tags() const override {
        return {static_cast<std::uint32_t>(out_c_), static_cast<std::uint32_t>(in_c_),
                static_cast<std::uint32_t>(kh_),    static_cast<std::uint32_t>(kw_),
                static_cast<std::uint32_t>(stride_), padding_ == Padding::Same ? 0u : 1u};
    }

    void init(InitScheme scheme, std::mt19937_64& rng) override {
        detail::init_weights<T>(weight_, bias_, scheme, in_c_ * kh_ * kw_, out_c_ * kh_ * kw_, rng);
    }

    [[nodiscard]] std::vector<T>& weight() { return weight_; }
    [[nodiscard]] std::vector<T>& bias() { return bias_; }
    [[nodiscard]] const std::vector<T>& weight_grad() const { return weight_grad_; }
    [[nodiscard]] const std::vector<T>& bias_grad() const { return bias_grad_; }
    [[nodiscard]] std::size_t in_channels() const { return in_c_; }
    [[nodiscard]] std::size_t out_channels() const { return out_c_; }

private:
    [[nodiscard]] std::size_t patch_size() const { return in_c_ * kh_ * kw_; }

    void check_input(const Shape& in) const {
        if (in.c != in_c_)
            throw ShapeError("conv: expected " + std::to_string(in_c_) + " input channels, got " +
                             std::to_string(in.c));
    }

    // Output columns [lo, hi) whose tap j lands inside the input row.
    [[nodiscard]] std::pair<std::size_t, std::size_t> valid_columns(std::size_t j) const {
        const auto ow = static_cast<std::ptrdiff_t>(geom_.out_w);
        const auto s = static_cast<std::ptrdiff_t>(stride_);
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(geom_.pad_left);
        const auto w = static_cast<std::ptrdiff_t>(in_shape_.w);
        // need 0 <= xo*s + off < w
        std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
        std::ptrdiff_t hi = w - off <= 0 ? 0 : (w - off + s - 1) / s;
        lo = std::min(lo, ow);
        hi = std::clamp(hi, lo, ow);
        return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
    }

    // Output rows [lo, hi) whose tap i lands inside the input.
    [[nodiscard]] std::pair<std::size_t, std::size_t> valid_rows(std::size_t i) const {
        const auto oh = static_cast<std::ptrdiff_t>(geom_.out_h);
        const auto s = static_cast<std::ptrdiff_t>(stride_);
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(geom_.pad_top);
        const auto h = static_cast<std::ptrdiff_t>(in_shape_.h);
        std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
        std::ptrdiff_t hi = h - off <= 0 ? 0 : (h - off + s - 1) / s;
        lo = std::min(lo, oh);
        hi = std::clamp(hi, lo, oh);
        return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
    }

    // Stride 1 with equal widths: every tap's column row is the input plane
    // shifted by a constant offset.
    [[nodiscard]] bool shifted_planes() const { return stride_ == 1 && geom_.out_w == in_shape_.w; }

    // Row (c, i, j) of sample n's column matrix holds, for every output
    // position, the input value that kernel tap (i, j) of channel c sees there.
    void im2col(const Tensor<T>& x, std::size_t n) {
        const Shape& in = in_shape_;
        const std::size_t oh = geom_.out_h, ow = geom_.out_w;
        const std::size_t plane = oh * ow;
        for (std::size_t c = 0; c < in_c_; ++c) {
            const T* src = x.data() + (n * in_c_ + c) * in.h * in.w;
            for (std::size_t i = 0; i < kh_; ++i)
                for (std::size_t j = 0; j < kw_; ++j) {
                    T* row = cols_.data() + ((c * kh_ + i) * kw_ + j) * plane;
                    const auto [lo, hi] = valid_columns(j);
                    const std::ptrdiff_t xoff = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(geom_.pad_left);
                    if (shifted_planes()) {
                        const auto [y0, y1] = valid_rows(i);
                        const std::ptrdiff_t shift = (static_cast<std::ptrdiff_t>(i) -
                                                      static_cast<std::ptrdiff_t>(geom_.pad_top)) *
                                                         static_cast<std::ptrdiff_t>(in.w) + xoff;
                        std::fill(row, row + y0 * ow, T{0});
                        // whole valid band in one copy; wrapped edge columns are cleared after
                        const std::ptrdiff_t first = static_cast<std::ptrdiff_t>(y0 * ow + lo);
                        const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(y1 == y0 ? y0 * ow : (y1 - 1) * ow + hi);
                        if (hi > lo && last > first) std::copy(src + first + shift, src + last + shift, row + first);
                        for (std::size_t y = y0; y < y1; ++y) {
                            std::fill(row + y * ow, row + y * ow + lo, T{0});
                            std::fill(row + y * ow + hi, row + (y + 1) * ow, T{0});
                        }
                        std::fill(row + y1 * ow, row + plane, T{0});
                        continue;
                    }
                    for (std::size_t y = 0; y < oh; ++y) {
                        T* dst = row + y * ow;
                        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * stride_ + i) -
                                                  static_cast<std::ptrdiff_t>(geom_.pad_top);
                        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(in.h)) {
                            std::fill_n(dst, ow, T{0});
                            continue;
                        }
                        const T* srow = src + static_cast<std::size_t>(sy) * in.w;
                        std::fill_n(dst, lo, T{0});
                        if (stride_ == 1) {
                            std::copy_n(srow + (static_cast<std::ptrdiff_t>(lo) + xoff), hi - lo, dst + lo);
                        } else {
                            for (std::size_t xo = lo; xo < hi; ++xo)
                                dst[xo] = srow[static_cast<std::ptrdiff_t>(xo * stride_) + xoff];
                        }
                        std::fill(dst + hi, dst + ow, T{0});
                    }
                }
        }
    }

    void col2im(std::size_t n) {
        const Shape& in = in_shape_;
        const std::size_t oh = geom_.out_h, ow = geom_.out_w;
        const std::size_t plane = oh * ow;
        for (std::size_t c = 0; c < in_c_; ++c) {
            T* dst = grad_in_.data() + (n * in_c_ + c) * in.h * in.w;
            for (std::size_t i = 0; i < kh_; ++i)
                for (std::size_t j = 0; j < kw_; ++j) {
                    T* row = dcols_.data() + ((c * kh_ + i) * kw_ + j) * plane;
                    const auto [lo, hi] = valid_columns(j);
                    const std::ptrdiff_t xoff = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(geom_.pad_left);
                    if (shifted_planes()) {
                        const auto [y0, y1] = valid_rows(i);
                        if (y1 == y0 || hi == lo) continue;
                        const std::ptrdiff_t shift = (static_cast<std::ptrdiff_t>(i) -
                                                      static_cast<std::ptrdiff_t>(geom_.pad_top)) *
                                                         static_cast<std::ptrdiff_t>(in.w) + xoff;
                        // clear the taps that fall in padding so one flat add is exact
                        for (std::size_t y = y0; y < y1; ++y) {
                            std::fill(row + y * ow, row + y * ow + lo, T{0});
                            std::fill(row + y * ow + hi, row + (y + 1) * ow, T{0});
                        }
                        const std::size_t first = y0 * ow + lo, last = (y1 - 1) * ow + hi;
                        T* __restrict d = dst + (static_cast<std::ptrdiff_t>(first) + shift);
                        const T* __restrict sv = row + first;
                        for (std::size_t q = 0; q < last - first; ++q) d[q] += sv[q];
                        continue;
                    }
                    for (std::size_t y = 0; y < oh; ++y) {
                        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * stride_ + i) -
                                                  static_cast<std::ptrdiff_t>(geom_.pad_top);
                        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(in.h)) continue;
                        const T* src = row + y * ow;
                        T* drow = dst + static_cast<std::size_t>(sy) * in.w;
                        if (stride_ == 1) {
                            T* __restrict d = drow + (static_cast<std::ptrdiff_t>(lo) + xoff);
                            const T* __restrict sv = src + lo;
                            for (std::size_t q = 0; q < hi - lo; ++q) d[q] += sv[q];
                        } else {
                            for (std::size_t xo = lo; xo < hi; ++xo)
                                drow[static_cast<std::ptrdiff_t>(xo * stride_) + xoff] += src[xo];
                        }
                    }
                }
        }
    }

    std::size_t in_c_, out_c_, kh_, kw_, stride_;
    Padding padding_;
    std::vector<T> weight_, bias_, weight_grad_, bias_grad_;

    Shape in_shape_{};
    ConvGeometry geom_{};
    std::vector<T> cols_, dcols_;
    Tensor<T> input_, out_, grad_in_;
};

}  // namespace sconvnet
