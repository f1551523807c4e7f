#pragma once

// Butterworth band-stop design (bilinear transform, second-order sections)
// and causal per-channel filtering for power-line interference removal.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sconvnet/error.hpp"

namespace sconvnet::dsp {

struct FilterSpec {
    double sample_rate = 1000.0;
    double low_cut = 45.0;
    double high_cut = 55.0;
    int order = 2;  // analog low-pass prototype order

    void validate() const {
        if (!(sample_rate > 0.0) || !std::isfinite(sample_rate))
            throw ParameterError("filter: sample rate must be positive");
        if (order < 1) throw ParameterError("filter: order must be >= 1");
        if (!(low_cut > 0.0))
            throw ParameterError("filter: low cut must be > 0 Hz");
        if (!(low_cut < high_cut))
            throw ParameterError("filter: low cut must be below high cut");
        if (!(high_cut < sample_rate / 2.0))
            throw ParameterError("filter: high cut must be below Nyquist (" +
                                 std::to_string(sample_rate / 2.0) + " Hz)");
    }
};

/// One second-order section, H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2).
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;

    [[nodiscard]] std::complex<double> response(std::complex<double> z) const {
        const auto zi = 1.0 / z;
        return (b0 + zi * (b1 + zi * b2)) / (1.0 + zi * (a1 + zi * a2));
    }

    /// Both poles strictly inside the unit circle (Jury conditions for a quadratic).
    [[nodiscard]] bool stable() const {
        return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
    }
};

struct BiquadCascade {
    std::vector<Biquad> sections;

    [[nodiscard]] std::complex<double> response(std::complex<double> z) const {
        std::complex<double> h{1.0, 0.0};
        for (const auto& s : sections) h *= s.response(z);
        return h;
    }

    /// |H(e^{j 2 pi f / fs})|
    [[nodiscard]] double magnitude_at(double freq_hz, double sample_rate) const {
        const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate;
        return std::abs(response(std::polar(1.0, w)));
    }

    [[nodiscard]] bool stable() const {
        return std::all_of(sections.begin(), sections.end(),
                           [](const Biquad& s) { return s.stable(); });
    }
};

/// Designs the band-stop as: analog Butterworth low-pass prototype, low-pass to
/// band-stop transform, bilinear transform. The band edges set the analog
/// bandwidth after prewarping; the notch centre is the arithmetic mid-band
/// frequency, prewarped so the digital zeros land exactly on it.
[[nodiscard]] inline BiquadCascade design_bandstop(const FilterSpec& spec) {
    spec.validate();
    using cd = std::complex<double>;
    const double fs2 = 2.0 * spec.sample_rate;
    const auto prewarp = [&](double f) {
        return fs2 * std::tan(std::numbers::pi * f / spec.sample_rate);
    };
    const double bw = prewarp(spec.high_cut) - prewarp(spec.low_cut);
    const double center_hz = 0.5 * (spec.low_cut + spec.high_cut);
    const double w0 = prewarp(center_hz);
    const double omega0 = 2.0 * std::numbers::pi * center_hz / spec.sample_rate;

    // s -> bw*s / (s^2 + w0^2) maps each prototype pole p to the roots of
    // s^2 - (bw/p) s + w0^2.
    std::vector<cd> upper;
    const int n = spec.order;
    for (int k = 0; k < n; ++k) {
        const cd p = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1) / (2.0 * n));
        const cd half = bw / (2.0 * p);
        const cd disc = std::sqrt(half * half - w0 * w0);
        for (const cd s : {half + disc, half - disc}) {
            const cd z = (fs2 + s) / (fs2 - s);
            if (z.imag() > 0.0) upper.push_back(z);
        }
    }
    if (static_cast<int>(upper.size()) != n)
        throw ParameterError("filter: band too wide for a complex-pole realisation");
    std::sort(upper.begin(), upper.end(),
              [](const cd& a, const cd& b) { return std::abs(a) < std::abs(b); });

    BiquadCascade cascade;
    const double zero_re = -2.0 * std::cos(omega0);
    for (const cd& pole : upper) {
        Biquad s;
        s.a1 = -2.0 * pole.real();
        s.a2 = std::norm(pole);
        const double gain = (1.0 + s.a1 + s.a2) / (2.0 + zero_re);
        s.b0 = gain;
        s.b1 = gain * zero_re;
        s.b2 = gain;
        cascade.sections.push_back(s);
    }
    return cascade;
}

/// Direct-form II transposed state for one channel.
class ChannelFilter {
public:
    explicit ChannelFilter(const BiquadCascade& cascade)
        : cascade_(&cascade), state_(cascade.sections.size() * 2, 0.0) {}

    double step(double x) {
        double v = x;
        for (std::size_t i = 0; i < cascade_->sections.size(); ++i) {
            const Biquad& s = cascade_->sections[i];
            double& z1 = state_[2 * i];
            double& z2 = state_[2 * i + 1];
            const double y = s.b0 * v + z1;
            z1 = s.b1 * v - s.a1 * y + z2;
            z2 = s.b2 * v - s.a2 * y;
            v = y;
        }
        return v;
    }

    void reset() { std::fill(state_.begin(), state_.end(), 0.0); }

private:
    const BiquadCascade* cascade_;
    std::vector<double> state_;
};

/// Causal single-pass filtering from zero initial state.
template <typename T>
[[nodiscard]] std::vector<T> filter_channel(const BiquadCascade& cascade,
                                            std::span<const T> signal) {
    ChannelFilter f(cascade);
    std::vector<T> out(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) {
        if (!std::isfinite(static_cast<double>(signal[i])))
            throw DataError("filter: non-finite sample at index " + std::to_string(i));
        out[i] = static_cast<T>(f.step(static_cast<double>(signal[i])));
    }
    return out;
}

template <typename T>
[[nodiscard]] std::vector<T> filter_channel(const BiquadCascade& cascade,
                                            const std::vector<T>& signal) {
    return filter_channel(cascade, std::span<const T>(signal));
}

}  // namespace sconvnet::dsp
