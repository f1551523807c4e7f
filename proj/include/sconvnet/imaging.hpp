#pragma once

// Instantaneous sEMG images: electrode grid layout, mV -> intensity mapping,
// max-min normalisation and zero padding to a square input.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sconvnet/error.hpp"

namespace sconvnet::imaging {

inline constexpr int kGridRows = 16;
inline constexpr int kGridCols = 8;
inline constexpr int kChannels = kGridRows * kGridCols;

inline constexpr double kMinMillivolt = -2.5;
inline constexpr double kMaxMillivolt = 2.5;

struct Cell {
    int row = 0;
    int col = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
};

/// Channel index -> grid cell, a bijection over the 16x8 grid.
class GridLayout {
public:
    /// Row-major: channel k sits at (k / 8, k % 8).
    GridLayout() {
        for (int k = 0; k < kChannels; ++k) cells_[k] = Cell{k / kGridCols, k % kGridCols};
    }

    explicit GridLayout(const std::array<Cell, kChannels>& cells) : cells_(cells) { validate(); }

    /// Plain text, one "channel row col" triple per line. Blank lines and
    /// lines starting with '#' are ignored.
    static GridLayout from_stream(std::istream& in) {
        std::array<Cell, kChannels> cells{};
        std::array<bool, kChannels> seen{};
        std::string line;
        int line_no = 0;
        int count = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#') continue;
            std::istringstream fields(line);
            int ch = -1, row = -1, col = -1;
            if (!(fields >> ch >> row >> col))
                throw DataError("layout: malformed line " + std::to_string(line_no));
            if (ch < 0 || ch >= kChannels)
                throw DataError("layout: channel out of range on line " + std::to_string(line_no));
            if (seen[ch])
                throw DataError("layout: channel " + std::to_string(ch) + " listed twice");
            seen[ch] = true;
            cells[ch] = Cell{row, col};
            ++count;
        }
        if (count != kChannels)
            throw DataError("layout: expected 128 channels, got " + std::to_string(count));
        return GridLayout(cells);
    }

    static GridLayout from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("layout: cannot open " + path);
        return from_stream(in);
    }

    [[nodiscard]] Cell cell(int channel) const { return cells_.at(channel); }

private:
    void validate() const {
        std::array<bool, kChannels> used{};
        for (const Cell& c : cells_) {
            if (c.row < 0 || c.row >= kGridRows || c.col < 0 || c.col >= kGridCols)
                throw DataError("layout: cell outside the 16x8 grid");
            auto& u = used[c.row * kGridCols + c.col];
            if (u) throw DataError("layout: two channels share a cell");
            u = true;
        }
    }

    std::array<Cell, kChannels> cells_{};
};

/// Row-major 2-D image with the gesture metadata it was cut from.
template <typename Pixel>
struct Image {
    int rows = kGridRows;
    int cols = kGridCols;
    std::vector<Pixel> pixels;  // rows * cols, row-major
    int gesture_label = 1;      // 1..G
    int subject_id = 0;
    int trial_id = 0;
    int sample_index = 0;

    [[nodiscard]] Pixel at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * cols + c]; }
    Pixel& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * cols + c]; }

    template <typename Other>
    [[nodiscard]] Image<Other> with_pixels(std::vector<Other> px) const {
        return Image<Other>{rows, cols, std::move(px), gesture_label, subject_id, trial_id, sample_index};
    }
};

using SemgImage = Image<std::uint8_t>;
using NormalizedImage = Image<double>;

/// [-2.5 mV, 2.5 mV] -> [0, 255], clamped, round half up.
[[nodiscard]] inline std::uint8_t millivolt_to_intensity(double mv) {
    const double v = std::clamp(mv, kMinMillivolt, kMaxMillivolt);
    const double x = v * (255.0 / (kMaxMillivolt - kMinMillivolt)) + 127.5;
    return static_cast<std::uint8_t>(std::floor(x + 0.5));
}

template <typename T>
[[nodiscard]] SemgImage frame_to_image(std::span<const T> frame, const GridLayout& layout) {
    if (frame.size() != static_cast<std::size_t>(kChannels))
        throw ShapeError("frame_to_image: expected 128 channel values, got " + std::to_string(frame.size()));
    SemgImage img;
    img.pixels.assign(kChannels, 0);
    for (int ch = 0; ch < kChannels; ++ch) {
        const double v = static_cast<double>(frame[ch]);
        if (!std::isfinite(v))
            throw DataError("frame_to_image: non-finite value on channel " + std::to_string(ch));
        const Cell c = layout.cell(ch);
        img.at(c.row, c.col) = millivolt_to_intensity(v);
    }
    return img;
}

struct NormalizationSpec {
    double source_min = 0.0;
    double source_max = 255.0;
    double target_min = 0.0;
    double target_max = 1.0;
};

/// I' = (I - Imin)(I'max - I'min)/(Imax - Imin) + I'min. A constant image
/// (Imax == Imin) maps to target_min everywhere.
template <typename Pixel>
[[nodiscard]] NormalizedImage max_min_normalize(const Image<Pixel>& image,
                                                const NormalizationSpec& spec) {
    if (!(spec.target_min < spec.target_max))
        throw ParameterError("normalize: target_min must be below target_max");
    std::vector<double> out(image.pixels.size(), spec.target_min);
    const double range = spec.source_max - spec.source_min;
    if (range > 0.0) {
        const double scale = (spec.target_max - spec.target_min) / range;
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = (static_cast<double>(image.pixels[i]) - spec.source_min) * scale + spec.target_min;
    }
    return image.with_pixels(std::move(out));
}

/// Per-image bounds: Imin/Imax are taken from the image itself.
template <typename Pixel>
[[nodiscard]] NormalizedImage max_min_normalize(const Image<Pixel>& image, double target_min = 0.0,
                                                double target_max = 1.0) {
    if (image.pixels.empty()) throw ShapeError("normalize: empty image");
    const auto [lo, hi] = std::minmax_element(image.pixels.begin(), image.pixels.end());
    return max_min_normalize(image, NormalizationSpec{static_cast<double>(*lo), static_cast<double>(*hi),
                                                      target_min, target_max});
}

/// 16x8 -> 16x16 with four zero columns on each side.
template <typename Pixel>
[[nodiscard]] Image<Pixel> pad_to_square(const Image<Pixel>& image) {
    if (image.rows != kGridRows || image.cols != kGridCols ||
        image.pixels.size() != static_cast<std::size_t>(kChannels))
        throw ShapeError("pad_to_square: expected a 16x8 image, got " + std::to_string(image.rows) + "x" +
                         std::to_string(image.cols));
    constexpr int side = kGridRows;
    constexpr int offset = (side - kGridCols) / 2;
    Image<Pixel> out = image.with_pixels(std::vector<Pixel>(side * side, Pixel{0}));
    out.cols = side;
    for (int r = 0; r < image.rows; ++r)
        for (int c = 0; c < image.cols; ++c) out.at(r, c + offset) = image.at(r, c);
    return out;
}

}  // namespace sconvnet::imaging
