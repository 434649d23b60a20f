#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "kinpipe/common.hpp"

namespace kinpipe::signal {

// Evenly sampled multi-channel signal, frame-major storage.
struct UniformSeries {
    double rate = 0.0;  // Hz
    std::size_t channels = 0;
    std::vector<double> data;  // frames x channels

    UniformSeries() = default;
    UniformSeries(double r, std::size_t ch, std::size_t frames)
        : rate(r), channels(ch), data(ch * frames, 0.0) {}

    std::size_t frames() const { return channels == 0 ? 0 : data.size() / channels; }
    double& at(std::size_t f, std::size_t c) { return data[f * channels + c]; }
    double at(std::size_t f, std::size_t c) const { return data[f * channels + c]; }
};

// Right-padded fixed-length signal plus validity mask.
struct MaskedSeries {
    std::size_t channels = 0;
    std::vector<double> data;        // max_frames x channels, zeros where masked out
    std::vector<std::uint8_t> mask;  // one flag per frame, prefix-true

    std::size_t frames() const { return mask.size(); }
    std::size_t real_frames() const {
        std::size_t n = 0;
        for (auto m : mask)
            if (m) ++n;
        return n;
    }
};

// ---------------------------------------------------------------------------
// Butterworth low-pass (bilinear transform with frequency pre-warping)
// ---------------------------------------------------------------------------

struct Biquad {
    double b0, b1, b2, a1, a2;  // normalized (a0 == 1)
};

// Second-order sections of a Butterworth low-pass. Each conjugate pole pair
// becomes one section; the section Q values are the classic Butterworth ones,
// so the cascade reproduces the analytic magnitude response (-3 dB at cutoff).
inline std::vector<Biquad> butterworth_sections(int order, double cutoff_hz, double rate_hz) {
    if (rate_hz <= 0.0) throw ParamError("sample rate must be positive");
    if (!(cutoff_hz > 0.0) || cutoff_hz >= rate_hz / 2.0)
        throw ParamError("cutoff must lie strictly between 0 and Nyquist");
    if (order != 2 && order != 4) throw ParamError("filter order must be 2 or 4");

    std::vector<double> qs;
    if (order == 2) {
        qs = {1.0 / std::sqrt(2.0)};
    } else {
        // pole angles pi/8 and 3*pi/8 from the negative real axis
        qs = {1.0 / (2.0 * std::cos(std::numbers::pi / 8.0)),
              1.0 / (2.0 * std::cos(3.0 * std::numbers::pi / 8.0))};
    }

    const double w0 = 2.0 * std::numbers::pi * cutoff_hz / rate_hz;
    const double c = std::cos(w0);
    const double s = std::sin(w0);

    std::vector<Biquad> sections;
    sections.reserve(qs.size());
    for (double q : qs) {
        const double alpha = s / (2.0 * q);
        const double a0 = 1.0 + alpha;
        Biquad bq;
        bq.b0 = (1.0 - c) / 2.0 / a0;
        bq.b1 = (1.0 - c) / a0;
        bq.b2 = (1.0 - c) / 2.0 / a0;
        bq.a1 = -2.0 * c / a0;
        bq.a2 = (1.0 - alpha) / a0;
        sections.push_back(bq);
    }
    return sections;
}

// Direct-form-II-transposed pass with step-response initial conditions:
// a constant input yields a constant output from sample zero.
inline void biquad_apply(const Biquad& q, std::span<double> x) {
    if (x.empty()) return;
    const double dc = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    double s1 = (dc - q.b0) * x[0];
    double s2 = (q.b2 - q.a2 * dc) * x[0];
    for (double& xi : x) {
        const double y = q.b0 * xi + s1;
        s1 = q.b1 * xi - q.a1 * y + s2;
        s2 = q.b2 * xi - q.a2 * y;
        xi = y;
    }
}

inline void cascade_apply(const std::vector<Biquad>& sections, std::span<double> x) {
    for (const auto& q : sections) biquad_apply(q, x);
}

namespace detail {

// Odd (point) reflection about both end samples, as in filtfilt.
inline std::vector<double> reflect_pad(std::span<const double> x, std::size_t padlen) {
    std::vector<double> ext;
    ext.reserve(x.size() + 2 * padlen);
    for (std::size_t i = 0; i < padlen; ++i) ext.push_back(2.0 * x[0] - x[padlen - i]);
    ext.insert(ext.end(), x.begin(), x.end());
    const std::size_t n = x.size();
    for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);
    return ext;
}

}  // namespace detail

// Single forward pass of the Butterworth cascade per channel. Exposed so the
// magnitude response can be measured directly; the pipeline itself uses the
// zero-phase variant below.
inline UniformSeries butterworth_single_pass(const UniformSeries& in, int order,
                                             double cutoff_hz) {
    const auto sections = butterworth_sections(order, cutoff_hz, in.rate);
    UniformSeries out = in;
    const std::size_t n = in.frames();
    std::vector<double> ch(n);
    for (std::size_t c = 0; c < in.channels; ++c) {
        for (std::size_t f = 0; f < n; ++f) ch[f] = in.at(f, c);
        cascade_apply(sections, ch);
        for (std::size_t f = 0; f < n; ++f) out.at(f, c) = ch[f];
    }
    return out;
}

// Zero-phase Butterworth low-pass: forward-backward application over a
// reflect-padded extension of 3x the filter order at each end. Output length
// equals input length and the effective magnitude response is squared.
inline UniformSeries butterworth_lowpass(const UniformSeries& in, int order, double cutoff_hz) {
    const auto sections = butterworth_sections(order, cutoff_hz, in.rate);
    if (in.frames() == 0) throw ParamError("cannot filter an empty series");
    UniformSeries out = in;
    const std::size_t n = in.frames();
    const std::size_t padlen = std::min<std::size_t>(3 * static_cast<std::size_t>(order),
                                                     n > 1 ? n - 1 : 0);
    std::vector<double> ch(n);
    for (std::size_t c = 0; c < in.channels; ++c) {
        for (std::size_t f = 0; f < n; ++f) ch[f] = in.at(f, c);
        std::vector<double> ext =
            padlen > 0 ? detail::reflect_pad(ch, padlen) : std::vector<double>(ch);
        cascade_apply(sections, ext);
        std::reverse(ext.begin(), ext.end());
        cascade_apply(sections, ext);
        std::reverse(ext.begin(), ext.end());
        for (std::size_t f = 0; f < n; ++f) out.at(f, c) = ext[f + padlen];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rate conversion and shaping
// ---------------------------------------------------------------------------

// Linear interpolation of each channel at timestamps k/target_rate spanning
// the original duration. No implicit anti-aliasing: filter upstream.
inline UniformSeries downsample(const UniformSeries& in, double target_rate) {
    if (target_rate <= 0.0) throw ParamError("target rate must be positive");
    if (target_rate > in.rate) throw ParamError("downsample cannot raise the rate");
    const std::size_t n = in.frames();
    if (n == 0) throw ParamError("cannot resample an empty series");
    const double duration = static_cast<double>(n - 1) / in.rate;
    const std::size_t n_out =
        static_cast<std::size_t>(std::floor(duration * target_rate + 1e-9)) + 1;
    UniformSeries out(target_rate, in.channels, n_out);
    for (std::size_t k = 0; k < n_out; ++k) {
        double pos = static_cast<double>(k) * in.rate / target_rate;
        if (pos > static_cast<double>(n - 1)) pos = static_cast<double>(n - 1);
        const std::size_t i0 = static_cast<std::size_t>(pos);
        const std::size_t i1 = std::min(i0 + 1, n - 1);
        const double frac = pos - static_cast<double>(i0);
        for (std::size_t c = 0; c < in.channels; ++c)
            out.at(k, c) = in.at(i0, c) + frac * (in.at(i1, c) - in.at(i0, c));
    }
    return out;
}

// Linear re-sampling onto n_frames uniformly spaced points over normalized
// time [0,1]. First and last frames are preserved exactly.
inline UniformSeries resample_fixed(const UniformSeries& in, std::size_t n_frames) {
    const std::size_t n = in.frames();
    if (n < 2) throw ParamError("resample_fixed needs at least 2 frames");
    if (n_frames < 2) throw ParamError("resample_fixed target must be >= 2 frames");
    UniformSeries out(in.rate, in.channels, n_frames);
    for (std::size_t j = 0; j < n_frames; ++j) {
        if (j == 0) {
            for (std::size_t c = 0; c < in.channels; ++c) out.at(0, c) = in.at(0, c);
            continue;
        }
        if (j == n_frames - 1) {
            for (std::size_t c = 0; c < in.channels; ++c) out.at(j, c) = in.at(n - 1, c);
            continue;
        }
        const double pos = static_cast<double>(j) * static_cast<double>(n - 1) /
                           static_cast<double>(n_frames - 1);
        const std::size_t i0 = static_cast<std::size_t>(pos);
        const std::size_t i1 = std::min(i0 + 1, n - 1);
        const double frac = pos - static_cast<double>(i0);
        for (std::size_t c = 0; c < in.channels; ++c)
            out.at(j, c) = in.at(i0, c) + frac * (in.at(i1, c) - in.at(i0, c));
    }
    return out;
}

// Right-pads with zeros to max_frames and records the validity mask.
inline MaskedSeries zero_pad(const UniformSeries& in, std::size_t max_frames) {
    const std::size_t n = in.frames();
    if (n > max_frames)
        throw SequenceOverflowError("series of " + std::to_string(n) +
                                    " frames exceeds padded length " +
                                    std::to_string(max_frames));
    MaskedSeries out;
    out.channels = in.channels;
    out.data.assign(max_frames * in.channels, 0.0);
    out.mask.assign(max_frames, 0);
    std::copy(in.data.begin(), in.data.end(), out.data.begin());
    std::fill(out.mask.begin(), out.mask.begin() + static_cast<std::ptrdiff_t>(n), 1);
    return out;
}

// Inverse of zero_pad for auditing: drops masked-out frames.
inline UniformSeries drop_masked(const MaskedSeries& in, double rate) {
    UniformSeries out(rate, in.channels, in.real_frames());
    std::size_t f_out = 0;
    for (std::size_t f = 0; f < in.frames(); ++f) {
        if (!in.mask[f]) continue;
        for (std::size_t c = 0; c < in.channels; ++c)
            out.at(f_out, c) = in.data[f * in.channels + c];
        ++f_out;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Robust statistics
// ---------------------------------------------------------------------------

// Median with the average-of-middle-two convention, and the median absolute
// deviation around it.
inline std::pair<double, double> median_and_mad(std::vector<double> values) {
    if (values.empty()) throw ParamError("median of an empty list");
    auto median_of = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    const double med = median_of(values);
    for (double& v : values) v = std::fabs(v - med);
    const double mad = median_of(values);
    return {med, mad};
}

// Euclidean norm across channels, frame by frame.
inline UniformSeries magnitude_series(const UniformSeries& in) {
    UniformSeries out(in.rate, 1, in.frames());
    for (std::size_t f = 0; f < in.frames(); ++f) {
        double s = 0.0;
        for (std::size_t c = 0; c < in.channels; ++c) s += in.at(f, c) * in.at(f, c);
        out.at(f, 0) = std::sqrt(s);
    }
    return out;
}

}  // namespace kinpipe::signal
