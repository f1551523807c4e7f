#pragma once

// EMGB per-subject container, a deterministic synthetic generator, and the
// filter -> image preprocessing pipeline.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sconvnet/dsp.hpp"
#include "sconvnet/imaging.hpp"

namespace sconvnet::dataio {

/// (gesture, trial, sample) -> flat frame index, gesture-major. All indices 0-based.
struct DatasetIndex {
    std::size_t gestures = 0;
    std::size_t trials = 0;
    std::size_t samples_per_trial = 0;

    [[nodiscard]] std::size_t size() const { return gestures * trials * samples_per_trial; }
    [[nodiscard]] std::size_t frame(std::size_t g, std::size_t t, std::size_t s) const {
        return (g * trials + t) * samples_per_trial + s;
    }
    /// Half-open range of frame indices for one recorded trial.
    [[nodiscard]] std::pair<std::size_t, std::size_t> range(std::size_t g, std::size_t t) const {
        const std::size_t b = frame(g, t, 0);
        return {b, b + samples_per_trial};
    }
    friend bool operator==(const DatasetIndex&, const DatasetIndex&) = default;
};

struct EmgbHeader {
    std::uint32_t version = 1;
    std::uint32_t sample_rate = 1000;
    std::uint16_t channels = imaging::kChannels;
    std::uint16_t gestures = 8;
    std::uint16_t trials = 10;
    std::uint32_t samples_per_trial = 1000;
    std::uint32_t subject_id = 0;

    static constexpr std::size_t kBytes = 26;
    static constexpr std::uint32_t kVersion = 1;

    [[nodiscard]] std::uint64_t payload_values() const {
        return static_cast<std::uint64_t>(gestures) * trials * samples_per_trial * channels;
    }
    [[nodiscard]] std::uint64_t file_bytes() const { return kBytes + payload_values() * 4; }
    [[nodiscard]] DatasetIndex index() const { return {gestures, trials, samples_per_trial}; }
    friend bool operator==(const EmgbHeader&, const EmgbHeader&) = default;
};

/// One subject's raw recordings in mV: gesture-major, then trial, then
/// sample, then channel.
struct EmgRecordingSet {
    EmgbHeader header;
    std::vector<float> samples;

    [[nodiscard]] DatasetIndex index() const { return header.index(); }

    /// samples_per_trial x channels block of one trial.
    [[nodiscard]] std::span<const float> trial(std::size_t g, std::size_t t) const {
        const std::size_t n = static_cast<std::size_t>(header.samples_per_trial) * header.channels;
        return std::span<const float>(samples).subspan((g * header.trials + t) * n, n);
    }
};

namespace detail {

class ByteWriter {
public:
    void u16(std::uint16_t v) {
        bytes.push_back(static_cast<char>(v & 0xff));
        bytes.push_back(static_cast<char>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void raw(const char* p, std::size_t n) { bytes.insert(bytes.end(), p, p + n); }
    std::vector<char> bytes;
};

class ByteReader {
public:
    ByteReader(const char* data, std::size_t size, std::string what) : p_(data), n_(size), what_(std::move(what)) {}

    void need(std::size_t k) const {
        if (off_ + k > n_)
            throw FormatError(what_ + ": truncated at byte " + std::to_string(off_) + " (need " + std::to_string(k) +
                              " more bytes, " + std::to_string(n_ - off_) + " available)");
    }
    std::uint16_t u16() {
        need(2);
        const auto* b = reinterpret_cast<const unsigned char*>(p_ + off_);
        off_ += 2;
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32() {
        need(4);
        const auto* b = reinterpret_cast<const unsigned char*>(p_ + off_);
        off_ += 4;
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    float f32() { return std::bit_cast<float>(u32()); }
    const char* take(std::size_t k) {
        need(k);
        const char* at = p_ + off_;
        off_ += k;
        return at;
    }
    [[nodiscard]] std::size_t offset() const { return off_; }
    [[nodiscard]] std::size_t remaining() const { return n_ - off_; }

private:
    const char* p_;
    std::size_t n_;
    std::size_t off_ = 0;
    std::string what_;
};

inline std::vector<char> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void dump(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed: " + path);
}

}  // namespace detail

[[nodiscard]] inline std::vector<char> encode_emgb(const EmgRecordingSet& rec) {
    const auto& h = rec.header;
    if (rec.samples.size() != h.payload_values())
        throw DataError("emgb: payload holds " + std::to_string(rec.samples.size()) + " values, header implies " +
                        std::to_string(h.payload_values()));
    detail::ByteWriter w;
    w.raw("EMGB", 4);
    w.u32(h.version);
    w.u32(h.sample_rate);
    w.u16(h.channels);
    w.u16(h.gestures);
    w.u16(h.trials);
    w.u32(h.samples_per_trial);
    w.u32(h.subject_id);
    w.bytes.reserve(w.bytes.size() + rec.samples.size() * 4);
    for (float v : rec.samples) {
        if (!std::isfinite(v)) throw DataError("emgb: refusing to write a non-finite sample");
        w.u32(std::bit_cast<std::uint32_t>(v));
    }
    return std::move(w.bytes);
}

[[nodiscard]] inline EmgRecordingSet decode_emgb(std::span<const char> bytes) {
    detail::ByteReader r(bytes.data(), bytes.size(), "emgb");
    r.need(4);
    if (std::memcmp(bytes.data(), "EMGB", 4) != 0) throw FormatError("emgb: bad magic at byte 0");
    (void)r.u32();
    EmgRecordingSet rec;
    auto& h = rec.header;
    h.version = r.u32();
    if (h.version != EmgbHeader::kVersion)
        throw FormatError("emgb: unsupported version " + std::to_string(h.version) + " at byte 4");
    h.sample_rate = r.u32();
    h.channels = r.u16();
    if (h.channels != imaging::kChannels)
        throw FormatError("emgb: expected 128 channels, header says " + std::to_string(h.channels) + " at byte 12");
    h.gestures = r.u16();
    h.trials = r.u16();
    h.samples_per_trial = r.u32();
    h.subject_id = r.u32();
    if (h.sample_rate == 0) throw FormatError("emgb: zero sample rate at byte 8");
    const std::uint64_t expected = h.payload_values() * 4;
    if (r.remaining() < expected)
        throw FormatError("emgb: truncated payload at byte " + std::to_string(r.offset() + r.remaining()) +
                          " (expected " + std::to_string(EmgbHeader::kBytes + expected) + " bytes)");
    if (r.remaining() > expected)
        throw FormatError("emgb: trailing data at byte " + std::to_string(EmgbHeader::kBytes + expected));
    rec.samples.resize(h.payload_values());
    for (std::size_t i = 0; i < rec.samples.size(); ++i) {
        const std::size_t at = r.offset();
        rec.samples[i] = r.f32();
        if (!std::isfinite(rec.samples[i]))
            throw FormatError("emgb: non-finite sample at byte " + std::to_string(at));
    }
    return rec;
}

inline void write_emgb(const std::string& path, const EmgRecordingSet& rec) { detail::dump(path, encode_emgb(rec)); }

[[nodiscard]] inline EmgRecordingSet read_emgb(const std::string& path) {
    const auto bytes = detail::slurp(path);
    return decode_emgb(bytes);
}

/// `subject_<id>.emgb`
[[nodiscard]] inline std::string subject_file_name(std::uint32_t subject_id) {
    return "subject_" + std::to_string(subject_id) + ".emgb";
}

struct BlobCenter {
    double row = 0.0;
    double col = 0.0;
};

struct SynthSpec {
    std::uint16_t gestures = 8;
    std::uint16_t trials = 10;
    std::uint32_t samples_per_trial = 1000;
    std::uint32_t sample_rate = 1000;
    std::uint32_t subject_id = 1;
    /// One centre per gesture on the 16x8 grid; empty selects an even lattice.
    std::vector<BlobCenter> centers;
    double blob_sigma = 1.5;      // grid cells
    double blob_amplitude = 2.0;  // mV at the centre
    double noise = 0.0;           // white-noise standard deviation, mV
    std::uint64_t seed = 1;

    /// Default centres: a lattice with 2 columns (4 beyond 8 gestures) and
    /// enough rows, cell-centred.
    [[nodiscard]] std::vector<BlobCenter> resolved_centers() const {
        if (!centers.empty()) return centers;
        std::vector<BlobCenter> out;
        const std::size_t ncols = gestures <= 8 ? 2 : 4;
        const std::size_t nrows = (gestures + ncols - 1) / ncols;
        for (std::size_t g = 0; g < gestures; ++g) {
            const double r = (static_cast<double>(g / ncols) + 0.5) * imaging::kGridRows / static_cast<double>(nrows) - 0.5;
            const double c = (static_cast<double>(g % ncols) + 0.5) * imaging::kGridCols / static_cast<double>(ncols) - 0.5;
            out.push_back({r, c});
        }
        return out;
    }

    void validate() const {
        if (gestures < 2) throw ParameterError("synth: need at least 2 gestures");
        if (trials < 1 || samples_per_trial < 1) throw ParameterError("synth: trials and samples must be >= 1");
        if (sample_rate == 0) throw ParameterError("synth: sample rate must be > 0");
        if (!(noise >= 0.0)) throw ParameterError("synth: noise must be >= 0");
        if (!(blob_sigma > 0.0)) throw ParameterError("synth: blob sigma must be > 0");
        const auto c = resolved_centers();
        if (c.size() != gestures) throw ParameterError("synth: need one centre per gesture");
        for (const auto& p : c)
            if (p.row < 0.0 || p.row > imaging::kGridRows - 1 || p.col < 0.0 || p.col > imaging::kGridCols - 1)
                throw ParameterError("synth: blob centre outside the 16x8 grid");
    }
};

/// Every frame of gesture g is a Gaussian blob centred on centers[g] plus
/// white noise, clamped to [-2.5, 2.5] mV. Channels are placed on the grid
/// through `layout`.
[[nodiscard]] inline EmgRecordingSet generate_synthetic(const SynthSpec& spec,
                                                        const imaging::GridLayout& layout = {}) {
    spec.validate();
    EmgRecordingSet rec;
    rec.header.sample_rate = spec.sample_rate;
    rec.header.gestures = spec.gestures;
    rec.header.trials = spec.trials;
    rec.header.samples_per_trial = spec.samples_per_trial;
    rec.header.subject_id = spec.subject_id;
    rec.samples.resize(rec.header.payload_values());

    const auto centers = spec.resolved_centers();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::array<double, imaging::kChannels> blob{};
    std::size_t k = 0;
    for (std::size_t g = 0; g < spec.gestures; ++g) {
        for (int ch = 0; ch < imaging::kChannels; ++ch) {
            const auto cell = layout.cell(ch);
            const double dr = cell.row - centers[g].row, dc = cell.col - centers[g].col;
            blob[ch] = spec.blob_amplitude * std::exp(-(dr * dr + dc * dc) / (2.0 * spec.blob_sigma * spec.blob_sigma));
        }
        for (std::size_t t = 0; t < spec.trials; ++t)
            for (std::size_t s = 0; s < spec.samples_per_trial; ++s)
                for (int ch = 0; ch < imaging::kChannels; ++ch) {
                    double v = blob[ch];
                    if (spec.noise > 0.0) v += spec.noise * gauss(rng);
                    rec.samples[k++] = static_cast<float>(std::clamp(v, imaging::kMinMillivolt, imaging::kMaxMillivolt));
                }
    }
    return rec;
}

/// Preprocessed 8-bit images of one subject, flat and in frame order.
struct ImageSet {
    int rows = imaging::kGridRows;
    int cols = imaging::kGridCols;
    std::uint32_t subject_id = 0;
    DatasetIndex index;
    std::vector<std::uint8_t> pixels;  // size() * rows * cols
    std::vector<std::uint16_t> gesture;  // 0-based
    std::vector<std::uint16_t> trial;    // 0-based
    std::vector<std::uint32_t> sample;

    [[nodiscard]] std::size_t size() const { return gesture.size(); }
    [[nodiscard]] std::size_t pixels_per_image() const { return static_cast<std::size_t>(rows) * cols; }
    [[nodiscard]] std::span<const std::uint8_t> image_pixels(std::size_t i) const {
        return std::span<const std::uint8_t>(pixels).subspan(i * pixels_per_image(), pixels_per_image());
    }

    [[nodiscard]] imaging::SemgImage image(std::size_t i) const {
        const auto px = image_pixels(i);
        return imaging::SemgImage{rows,          cols, {px.begin(), px.end()}, gesture[i] + 1, static_cast<int>(subject_id),
                                  trial[i] + 1, static_cast<int>(sample[i])};
    }
};

/// Per trial and channel: causal band-stop from zero state; then one image
/// per sample instant.
[[nodiscard]] inline ImageSet preprocess(const EmgRecordingSet& rec, const dsp::FilterSpec& filter,
                                         const imaging::GridLayout& layout = {}) {
    dsp::FilterSpec fs = filter;
    fs.sample_rate = rec.header.sample_rate;
    const auto cascade = dsp::design_bandstop(fs);
    const auto idx = rec.index();
    const std::size_t S = idx.samples_per_trial;
    constexpr std::size_t C = imaging::kChannels;

    ImageSet out;
    out.subject_id = rec.header.subject_id;
    out.index = idx;
    out.pixels.resize(idx.size() * C);
    out.gesture.resize(idx.size());
    out.trial.resize(idx.size());
    out.sample.resize(idx.size());

    std::vector<float> channel(S);
    std::vector<float> filtered(S * C);
    for (std::size_t g = 0; g < idx.gestures; ++g)
        for (std::size_t t = 0; t < idx.trials; ++t) {
            const auto block = rec.trial(g, t);
            for (std::size_t ch = 0; ch < C; ++ch) {
                for (std::size_t s = 0; s < S; ++s) channel[s] = block[s * C + ch];
                const auto y = dsp::filter_channel<float>(cascade, std::span<const float>(channel));
                for (std::size_t s = 0; s < S; ++s) filtered[s * C + ch] = y[s];
            }
            for (std::size_t s = 0; s < S; ++s) {
                const std::size_t f = idx.frame(g, t, s);
                const auto img = imaging::frame_to_image(std::span<const float>(filtered).subspan(s * C, C), layout);
                std::copy(img.pixels.begin(), img.pixels.end(), out.pixels.begin() + f * C);
                out.gesture[f] = static_cast<std::uint16_t>(g);
                out.trial[f] = static_cast<std::uint16_t>(t);
                out.sample[f] = static_cast<std::uint32_t>(s);
            }
        }
    return out;
}

/// SIMG: "SIMG", u32 version 1, u32 count, u16 rows, u16 cols, u32 subject,
/// u16 gestures, u16 trials, u32 samples per trial; then per image u16
/// gesture (1-based), u16 trial (1-based), u32 sample, rows*cols u8 pixels.
inline void write_images(const std::string& path, const ImageSet& set) {
    detail::ByteWriter w;
    w.raw("SIMG", 4);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(set.size()));
    w.u16(static_cast<std::uint16_t>(set.rows));
    w.u16(static_cast<std::uint16_t>(set.cols));
    w.u32(set.subject_id);
    w.u16(static_cast<std::uint16_t>(set.index.gestures));
    w.u16(static_cast<std::uint16_t>(set.index.trials));
    w.u32(static_cast<std::uint32_t>(set.index.samples_per_trial));
    for (std::size_t i = 0; i < set.size(); ++i) {
        w.u16(static_cast<std::uint16_t>(set.gesture[i] + 1));
        w.u16(static_cast<std::uint16_t>(set.trial[i] + 1));
        w.u32(set.sample[i]);
        const auto px = set.image_pixels(i);
        w.raw(reinterpret_cast<const char*>(px.data()), px.size());
    }
    detail::dump(path, w.bytes);
}

[[nodiscard]] inline ImageSet read_images(const std::string& path) {
    const auto bytes = detail::slurp(path);
    detail::ByteReader r(bytes.data(), bytes.size(), "simg");
    r.need(4);
    if (std::memcmp(bytes.data(), "SIMG", 4) != 0) throw FormatError("simg: bad magic at byte 0");
    (void)r.u32();
    if (const auto v = r.u32(); v != 1) throw FormatError("simg: unsupported version " + std::to_string(v) + " at byte 4");
    ImageSet set;
    const std::uint32_t count = r.u32();
    set.rows = r.u16();
    set.cols = r.u16();
    set.subject_id = r.u32();
    set.index.gestures = r.u16();
    set.index.trials = r.u16();
    set.index.samples_per_trial = r.u32();
    const std::size_t ppi = set.pixels_per_image();
    if (static_cast<std::uint64_t>(count) * (8 + ppi) > r.remaining())
        throw FormatError("simg: truncated, header promises " + std::to_string(count) + " images at byte " +
                          std::to_string(r.offset()));
    set.pixels.resize(count * ppi);
    for (std::uint32_t i = 0; i < count; ++i) {
        set.gesture.push_back(static_cast<std::uint16_t>(r.u16() - 1));
        set.trial.push_back(static_cast<std::uint16_t>(r.u16() - 1));
        set.sample.push_back(r.u32());
        const char* px = r.take(ppi);
        std::memcpy(set.pixels.data() + i * ppi, px, ppi);
        if (set.gesture.back() >= set.index.gestures || set.trial.back() >= set.index.trials)
            throw FormatError("simg: image " + std::to_string(i) + " labels outside the header index");
    }
    if (r.remaining() != 0) throw FormatError("simg: trailing data at byte " + std::to_string(r.offset()));
    return set;
}

}  // namespace sconvnet::dataio
