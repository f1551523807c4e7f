#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "sconvnet/batchnorm.hpp"
#include "sconvnet/conv.hpp"
#include "sconvnet/dense.hpp"
#include "sconvnet/elementwise.hpp"
#include "sconvnet/layer.hpp"
#include "sconvnet/loss.hpp"
#include "sconvnet/pool.hpp"

namespace sconvnet {

/// A sequential stack of layers mapping (N, C, H, W) images to (N, G, 1, 1) scores.
template <typename T>
class Network {
public:
    Network() = default;
    explicit Network(Shape input_per_sample) : input_(input_per_sample) { input_.n = 1; }

    Network(const Network& other) : input_(other.input_) {
        for (const auto& l : other.layers_) layers_.push_back(l->clone());
    }
    Network& operator=(const Network& other) {
        if (this != &other) {
            Network copy(other);
            *this = std::move(copy);
        }
        return *this;
    }
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    /// Appends a layer after checking it accepts the current output shape.
    template <typename L, typename... Args>
    L& add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        (void)layer->output_shape(output_shape(1));
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->set_input_grad_required(i > 0 || input_grad_);
        return ref;
    }

    [[nodiscard]] Shape input_shape(std::size_t batch) const { return {batch, input_.c, input_.h, input_.w}; }

    [[nodiscard]] Shape output_shape(std::size_t batch) const {
        Shape s = input_shape(batch);
        for (const auto& l : layers_) s = l->output_shape(s);
        return s;
    }

    [[nodiscard]] std::size_t num_classes() const { return output_shape(1).per_sample(); }
    [[nodiscard]] std::size_t size() const { return layers_.size(); }
    [[nodiscard]] Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
    [[nodiscard]] const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

    /// Gradient checks on the input need dL/dx from the first layer too.
    void set_input_grad_required(bool required) {
        input_grad_ = required;
        if (!layers_.empty()) layers_.front()->set_input_grad_required(required);
    }

    const Tensor<T>& forward(const Tensor<T>& x, Mode mode) {
        const Shape s = x.shape();
        if (s.c != input_.c || s.h != input_.h || s.w != input_.w)
            throw ShapeError("network: input " + s.str() + " does not match " + input_shape(s.n).str());
        const Tensor<T>* cur = &x;
        for (auto& l : layers_) cur = &l->forward(*cur, mode);
        return *cur;
    }

    const Tensor<T>& backward(const Tensor<T>& grad_logits) {
        const Tensor<T>* cur = &grad_logits;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = &(*it)->backward(*cur);
        return *cur;
    }

    [[nodiscard]] std::vector<ParamView<T>> params() {
        std::vector<ParamView<T>> out;
        for (auto& l : layers_)
            for (auto& p : l->params()) out.push_back(p);
        return out;
    }

    [[nodiscard]] std::size_t param_count() {
        std::size_t n = 0;
        for (auto& l : layers_) n += l->param_count();
        return n;
    }

    void init(InitScheme scheme, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        for (auto& l : layers_) l->init(scheme, rng);
    }

    /// Gives every dropout layer its own stream derived from `seed`.
    void reseed_dropout(std::uint64_t seed) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
        std::vector<std::uint64_t> seeds(layers_.size());
        {
            std::vector<std::uint32_t> raw(layers_.size() * 2);
            seq.generate(raw.begin(), raw.end());
            for (std::size_t i = 0; i < seeds.size(); ++i)
                seeds[i] = (static_cast<std::uint64_t>(raw[2 * i]) << 32) | raw[2 * i + 1];
        }
        for (std::size_t i = 0; i < layers_.size(); ++i)
            if (auto* d = dynamic_cast<Dropout<T>*>(layers_[i].get())) d->reseed(seeds[i]);
    }

    /// Copy of all parameters and running statistics, in declaration order.
    [[nodiscard]] std::vector<std::vector<T>> snapshot() {
        std::vector<std::vector<T>> out;
        for (auto& l : layers_) {
            for (auto& p : l->params()) out.emplace_back(p.value.begin(), p.value.end());
            for (auto& b : l->buffers()) out.emplace_back(b.begin(), b.end());
        }
        return out;
    }

    void restore(const std::vector<std::vector<T>>& state) {
        std::size_t k = 0;
        const auto take = [&](std::span<T> dst) {
            if (k >= state.size() || state[k].size() != dst.size()) throw ShapeError("network: snapshot mismatch");
            std::copy(state[k].begin(), state[k].end(), dst.begin());
            ++k;
        };
        for (auto& l : layers_) {
            for (auto& p : l->params()) take(p.value);
            for (auto& b : l->buffers()) take(b);
        }
        if (k != state.size()) throw ShapeError("network: snapshot mismatch");
    }

    /// Binary checkpoint: "SCNN", u32 version, u32 layer count, then per layer
    /// u32 kind tag, u32 tag count, the tags, and the parameters followed by
    /// any running statistics as little-endian f32.
    void save(std::ostream& out) {
        out.write("SCNN", 4);
        put_u32(out, kCheckpointVersion);
        put_u32(out, static_cast<std::uint32_t>(layers_.size()));
        for (auto& l : layers_) {
            put_u32(out, static_cast<std::uint32_t>(l->kind()));
            const auto tags = l->shape_tags();
            put_u32(out, static_cast<std::uint32_t>(tags.size()));
            for (auto t : tags) put_u32(out, t);
            for (auto& p : l->params())
                for (T v : p.value) put_f32(out, static_cast<float>(v));
            for (auto& b : l->buffers())
                for (T v : b) put_f32(out, static_cast<float>(v));
        }
        if (!out) throw DataError("checkpoint: write failed");
    }

    void save(const std::string& path) {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw DataError("checkpoint: cannot open " + path + " for writing");
        save(f);
    }

    /// Loads parameters into an already-built network of identical structure.
    void load(std::istream& in) {
        std::uint64_t offset = 0;
        char magic[4] = {};
        in.read(magic, 4);
        if (!in || std::memcmp(magic, "SCNN", 4) != 0) throw FormatError("checkpoint: bad magic at byte 0");
        offset += 4;
        const auto version = get_u32(in, offset);
        if (version != kCheckpointVersion)
            throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " at byte 4");
        const auto count = get_u32(in, offset);
        if (count != layers_.size())
            throw FormatError("checkpoint: layer count " + std::to_string(count) + " does not match model (" +
                              std::to_string(layers_.size()) + ") at byte 8");
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& l = *layers_[i];
            const auto at = offset;
            const auto kind = get_u32(in, offset);
            if (kind != static_cast<std::uint32_t>(l.kind()))
                throw FormatError("checkpoint: layer " + std::to_string(i) + " kind mismatch at byte " +
                                  std::to_string(at));
            const auto ntags = get_u32(in, offset);
            std::vector<std::uint32_t> tags(ntags);
            for (auto& t : tags) t = get_u32(in, offset);
            if (tags != l.shape_tags())
                throw FormatError("checkpoint: layer " + std::to_string(i) + " shape mismatch at byte " +
                                  std::to_string(at));
            for (auto& p : l.params())
                for (T& v : p.value) v = static_cast<T>(get_f32(in, offset));
            for (auto& b : l.buffers())
                for (T& v : b) v = static_cast<T>(get_f32(in, offset));
        }
    }

    void load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw DataError("checkpoint: cannot open " + path);
        load(f);
    }

    static constexpr std::uint32_t kCheckpointVersion = 1;

private:
    static void put_u32(std::ostream& out, std::uint32_t v) {
        const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    }
    static void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

    static std::uint32_t get_u32(std::istream& in, std::uint64_t& offset) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw FormatError("checkpoint: truncated at byte " + std::to_string(offset));
        offset += 4;
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    static float get_f32(std::istream& in, std::uint64_t& offset) { return std::bit_cast<float>(get_u32(in, offset)); }

    Shape input_{1, 1, 16, 8};
    bool input_grad_ = false;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace sconvnet
