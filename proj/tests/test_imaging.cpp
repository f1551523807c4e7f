#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace sct;
using imaging::GridLayout;

TEST(Intensity, RangeEndsAndMidpoint) {
    EXPECT_EQ(imaging::millivolt_to_intensity(-2.5), 0);
    EXPECT_EQ(imaging::millivolt_to_intensity(2.5), 255);
    EXPECT_EQ(imaging::millivolt_to_intensity(0.0), 128);  // 127.5 rounds half up
    EXPECT_EQ(imaging::millivolt_to_intensity(-3.0), 0);
    EXPECT_EQ(imaging::millivolt_to_intensity(3.0), 255);
    EXPECT_EQ(imaging::millivolt_to_intensity(-1e9), 0);
}

TEST(Intensity, Monotone) {
    Gen g(11);
    for (int k = 0; k < 5000; ++k) {
        double a = g.uniform(-3.5, 3.5), b = g.uniform(-3.5, 3.5);
        if (a > b) std::swap(a, b);
        EXPECT_LE(imaging::millivolt_to_intensity(a), imaging::millivolt_to_intensity(b));
    }
}

TEST(Intensity, RoundHalfUpOnEveryStep) {
    // v = (k - 127.5) / 51 sits exactly on a rounding boundary between k-1 and k
    for (int k = 1; k <= 255; ++k) {
        const double v = (k - 127.5) / 51.0;
        const int got = imaging::millivolt_to_intensity(v);
        EXPECT_TRUE(got == k || got == k - 1) << k;  // floating representation may land either side
        EXPECT_EQ(imaging::millivolt_to_intensity(v + 1e-9), k);
    }
}

TEST(FrameToImage, RowMajorDefaultLayout) {
    std::vector<double> frame(128);
    for (int ch = 0; ch < 128; ++ch) frame[ch] = -2.5 + 5.0 * ch / 127.0;
    const auto img = imaging::frame_to_image(std::span<const double>(frame), GridLayout{});
    EXPECT_EQ(img.rows, 16);
    EXPECT_EQ(img.cols, 8);
    for (int ch = 0; ch < 128; ++ch)
        EXPECT_EQ(img.at(ch / 8, ch % 8), imaging::millivolt_to_intensity(frame[ch]));
}

TEST(FrameToImage, CustomLayoutPlacesChannels) {
    // transpose-like permutation: channel k -> (k % 16, k / 16)
    std::ostringstream text;
    text << "# channel row col\n\n";
    for (int k = 0; k < 128; ++k) text << k << ' ' << k % 16 << ' ' << k / 16 << '\n';
    std::istringstream in(text.str());
    const auto layout = GridLayout::from_stream(in);
    std::vector<float> frame(128, 0.0f);
    frame[17] = 2.5f;
    const auto img = imaging::frame_to_image(std::span<const float>(frame), layout);
    EXPECT_EQ(img.at(1, 1), 255);
    EXPECT_EQ(img.at(2, 1), 128);
}

TEST(FrameToImage, Errors) {
    std::vector<double> short_frame(127, 0.0);
    EXPECT_THROW((void)imaging::frame_to_image(std::span<const double>(short_frame), GridLayout{}), ShapeError);
    std::vector<double> frame(128, 0.0);
    frame[5] = std::nan("");
    EXPECT_THROW((void)imaging::frame_to_image(std::span<const double>(frame), GridLayout{}), DataError);
}

TEST(Layout, RejectsNonBijections) {
    const auto parse = [](const std::string& s) {
        std::istringstream in(s);
        return GridLayout::from_stream(in);
    };
    std::ostringstream dup;
    for (int k = 0; k < 128; ++k) dup << k << " 0 0\n";
    EXPECT_THROW(parse(dup.str()), DataError);
    std::ostringstream missing;
    for (int k = 0; k < 127; ++k) missing << k << ' ' << k / 8 << ' ' << k % 8 << '\n';
    EXPECT_THROW(parse(missing.str()), DataError);
    std::ostringstream outside;
    for (int k = 0; k < 128; ++k) outside << k << ' ' << k / 8 + 1 << ' ' << k % 8 << '\n';
    EXPECT_THROW(parse(outside.str()), DataError);
    EXPECT_THROW(parse("0 0\n"), DataError);
    EXPECT_THROW(GridLayout::from_file("/nonexistent/layout.txt"), DataError);
}

namespace {
imaging::SemgImage image_of(const std::vector<std::uint8_t>& px) {
    imaging::SemgImage img;
    img.pixels = px;
    return img;
}
}  // namespace

TEST(Normalize, Examples) {
    std::vector<std::uint8_t> px(128, 51);
    px[0] = 0;
    px[1] = 255;
    const auto out = imaging::max_min_normalize(image_of(px));
    EXPECT_DOUBLE_EQ(out.pixels[0], 0.0);
    EXPECT_DOUBLE_EQ(out.pixels[1], 1.0);
    EXPECT_NEAR(out.pixels[2], 0.2, 1e-15);
    const auto fixed = imaging::max_min_normalize(image_of(std::vector<std::uint8_t>(128, 51)),
                                                  imaging::NormalizationSpec{0, 255, 0, 1});
    EXPECT_NEAR(fixed.pixels[0], 0.2, 1e-15);
}

TEST(Normalize, ConstantImageMapsToTargetMin) {
    const auto out = imaging::max_min_normalize(image_of(std::vector<std::uint8_t>(128, 77)), -1.0, 3.0);
    for (double v : out.pixels) EXPECT_EQ(v, -1.0);
}

TEST(Normalize, RejectsEmptyTargetRange) {
    EXPECT_THROW((void)imaging::max_min_normalize(image_of(std::vector<std::uint8_t>(128, 1)), 1.0, 1.0), ParameterError);
}

TEST(Normalize, KeepsMetadata) {
    auto img = image_of(std::vector<std::uint8_t>(128, 3));
    img.gesture_label = 5;
    img.trial_id = 2;
    img.sample_index = 99;
    img.subject_id = 7;
    const auto out = imaging::max_min_normalize(img);
    EXPECT_EQ(out.gesture_label, 5);
    EXPECT_EQ(out.trial_id, 2);
    EXPECT_EQ(out.sample_index, 99);
    EXPECT_EQ(out.subject_id, 7);
}

TEST(NormalizeProperties, AffineOrderPreservingIdempotentInvertible) {
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        Gen g(seed);
        std::vector<std::uint8_t> px(128);
        for (auto& p : px) p = static_cast<std::uint8_t>(g.index(0, 255));
        px[g.index(0, 127)] = static_cast<std::uint8_t>(g.index(0, 100));
        px[g.index(0, 127)] = static_cast<std::uint8_t>(g.index(150, 255));  // non-degenerate
        const auto img = image_of(px);
        const auto n1 = imaging::max_min_normalize(img);
        const auto [lo, hi] = std::minmax_element(px.begin(), px.end());
        for (std::size_t i = 0; i < 128; ++i) {
            EXPECT_GE(n1.pixels[i], 0.0);
            EXPECT_LE(n1.pixels[i], 1.0);
            for (std::size_t j = 0; j < 128; j += 13)
                if (px[i] < px[j]) EXPECT_LT(n1.pixels[i], n1.pixels[j]);
        }
        // affine: midpoint of two pixels maps to midpoint of their images
        const double a = px[3], b = px[4];
        const double slope = 1.0 / (*hi - *lo);
        EXPECT_NEAR(n1.pixels[4] - n1.pixels[3], (b - a) * slope, 1e-12);
        const auto n2 = imaging::max_min_normalize(n1);
        for (std::size_t i = 0; i < 128; ++i) EXPECT_NEAR(n2.pixels[i], n1.pixels[i], 1e-12);
        // rescale back to the source range
        for (std::size_t i = 0; i < 128; ++i) {
            const double back = n1.pixels[i] * (*hi - *lo) + *lo;
            EXPECT_LE(std::abs(back - px[i]), 0.5);
            EXPECT_EQ(static_cast<int>(std::lround(back)), px[i]);
        }
    }
}

TEST(Pad, ShapeAndColumnSums) {
    imaging::Image<int> ones;
    ones.pixels.assign(128, 1);
    const auto out = imaging::pad_to_square(ones);
    EXPECT_EQ(out.rows, 16);
    EXPECT_EQ(out.cols, 16);
    ASSERT_EQ(out.pixels.size(), 256u);
    for (int c = 0; c < 16; ++c) {
        int s = 0;
        for (int r = 0; r < 16; ++r) s += out.at(r, c);
        EXPECT_EQ(s, (c >= 4 && c <= 11) ? 16 : 0) << c;
    }
}

TEST(Pad, PreservesContentAndSum) {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        Gen g(seed);
        imaging::SemgImage img;
        img.pixels.resize(128);
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(g.index(0, 255));
        const auto out = imaging::pad_to_square(img);
        long s_in = 0, s_out = 0;
        for (auto p : img.pixels) s_in += p;
        for (auto p : out.pixels) s_out += p;
        EXPECT_EQ(s_in, s_out);
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 8; ++c) EXPECT_EQ(out.at(r, c + 4), img.at(r, c));
    }
}

TEST(Pad, WrongShapeThrows) {
    imaging::SemgImage img;
    img.rows = 8;
    img.cols = 8;
    img.pixels.assign(64, 0);
    EXPECT_THROW((void)imaging::pad_to_square(img), ShapeError);
}
