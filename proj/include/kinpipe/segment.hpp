#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "kinpipe/common.hpp"
#include "kinpipe/signal.hpp"

namespace kinpipe::segment {

struct SegmentConfig {
    // Peaks below this fraction of the global maximum (topographic prominence)
    // are treated as jitter.
    double prominence_fraction = 0.10;
    // Minimum separation between accepted peaks, seconds.
    double min_separation_s = 0.25;
    // Boundary threshold relative to the transport peak.
    double threshold_fraction = 0.05;
};

struct FrameRange {
    std::size_t begin = 0;  // inclusive
    std::size_t end = 0;    // inclusive

    std::size_t length() const { return end - begin + 1; }
    bool contains(std::size_t i) const { return i >= begin && i <= end; }
};

// Reach / transport / depart split of one trial's velocity-norm profile.
struct PhaseSegmentation {
    FrameRange reach, transport, depart;
    std::array<std::size_t, 3> peak_indices{};  // temporal order
    double threshold_value = 0.0;               // threshold_fraction * v[peak 2]
};

// Central-difference speed of a multi-channel position series, forward and
// backward differences at the ends. Output has one channel and the same
// frame count and rate as the input.
inline signal::UniformSeries velocity_norm(const signal::UniformSeries& positions) {
    const std::size_t n = positions.frames();
    if (n < 2) throw ParamError("velocity_norm needs at least 2 frames");
    signal::UniformSeries out(positions.rate, 1, n);
    const double r = positions.rate;
    for (std::size_t f = 0; f < n; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < positions.channels; ++c) {
            double d;
            if (f == 0)
                d = (positions.at(1, c) - positions.at(0, c)) * r;
            else if (f == n - 1)
                d = (positions.at(n - 1, c) - positions.at(n - 2, c)) * r;
            else
                d = (positions.at(f + 1, c) - positions.at(f - 1, c)) * r / 2.0;
            acc += d * d;
        }
        out.at(f, 0) = std::sqrt(acc);
    }
    return out;
}

namespace detail {

// Topographic prominence of a local maximum: height above the higher of the
// two valley floors reached before a taller sample on each side.
inline double prominence(const std::vector<double>& v, std::size_t peak) {
    double left_base = v[peak];
    for (std::size_t j = peak; j-- > 0;) {
        left_base = std::min(left_base, v[j]);
        if (v[j] > v[peak]) break;
    }
    double right_base = v[peak];
    for (std::size_t j = peak + 1; j < v.size(); ++j) {
        right_base = std::min(right_base, v[j]);
        if (v[j] > v[peak]) break;
    }
    return v[peak] - std::max(left_base, right_base);
}

}  // namespace detail

// Local maxima with prominence >= min_prominence, thinned so surviving peaks
// are at least min_separation frames apart (taller peaks win). Returned in
// temporal order.
inline std::vector<std::size_t> find_peaks(const std::vector<double>& v, double min_prominence,
                                           std::size_t min_separation) {
    std::vector<std::size_t> cand;
    for (std::size_t i = 1; i + 1 < v.size(); ++i)
        if (v[i] > v[i - 1] && v[i] >= v[i + 1]) cand.push_back(i);
    std::vector<std::size_t> prominent;
    for (std::size_t i : cand)
        if (detail::prominence(v, i) >= min_prominence) prominent.push_back(i);
    // Enforce separation, keeping taller peaks first (ties: earlier index).
    std::sort(prominent.begin(), prominent.end(), [&](std::size_t a, std::size_t b) {
        if (v[a] != v[b]) return v[a] > v[b];
        return a < b;
    });
    std::vector<std::size_t> kept;
    for (std::size_t i : prominent) {
        bool ok = true;
        for (std::size_t j : kept)
            if ((i > j ? i - j : j - i) < min_separation) {
                ok = false;
                break;
            }
        if (ok) kept.push_back(i);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

// Splits a (already low-pass filtered) velocity-norm profile into the three
// movement phases and isolates the transport segment: the contiguous range
// around the second dominant peak where the profile stays above
// threshold_fraction of that peak, clipped at the valley minima towards the
// neighbouring peaks.
inline PhaseSegmentation segment_transport(const signal::UniformSeries& vnorm,
                                           const SegmentConfig& cfg = {}) {
    if (vnorm.channels != 1) throw ParamError("segment_transport expects a 1-channel series");
    const std::size_t n = vnorm.frames();
    if (n < 5) throw SegmentationError("profile too short to segment");
    std::vector<double> v(n);
    for (std::size_t f = 0; f < n; ++f) v[f] = vnorm.at(f, 0);

    const double vmax = *std::max_element(v.begin(), v.end());
    const std::size_t min_sep =
        static_cast<std::size_t>(std::lround(cfg.min_separation_s * vnorm.rate));
    auto peaks = find_peaks(v, cfg.prominence_fraction * vmax, std::max<std::size_t>(min_sep, 1));
    if (peaks.size() < 3)
        throw SegmentationError("found " + std::to_string(peaks.size()) +
                                " qualifying velocity peaks, need 3");
    if (peaks.size() > 3) {
        // Keep the three dominant ones, then restore temporal order.
        std::sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) {
            if (v[a] != v[b]) return v[a] > v[b];
            return a < b;
        });
        peaks.resize(3);
        std::sort(peaks.begin(), peaks.end());
    }
    const std::size_t p1 = peaks[0], p2 = peaks[1], p3 = peaks[2];

    auto argmin_between = [&](std::size_t lo, std::size_t hi) {
        std::size_t best = lo + 1;
        for (std::size_t i = lo + 1; i < hi; ++i)
            if (v[i] < v[best]) best = i;
        return best;
    };
    const std::size_t valley12 = argmin_between(p1, p2);
    const std::size_t valley23 = argmin_between(p2, p3);

    const double threshold = cfg.threshold_fraction * v[p2];
    std::size_t lo = p2;
    while (lo > valley12 && v[lo - 1] >= threshold) --lo;
    std::size_t hi = p2;
    while (hi < valley23 && v[hi + 1] >= threshold) ++hi;

    PhaseSegmentation seg;
    seg.peak_indices = {p1, p2, p3};
    seg.threshold_value = threshold;
    seg.transport = {lo, hi};
    seg.reach = {0, lo - 1};
    seg.depart = {hi + 1, n - 1};
    return seg;
}

inline double transport_duration(const PhaseSegmentation& seg, double rate) {
    return static_cast<double>(seg.transport.length()) / rate;
}

// Extracts the transport rows of a synchronized series.
inline signal::UniformSeries slice(const signal::UniformSeries& in, FrameRange range) {
    if (range.end >= in.frames()) throw ParamError("slice range exceeds series");
    signal::UniformSeries out(in.rate, in.channels, range.length());
    for (std::size_t f = 0; f < range.length(); ++f)
        for (std::size_t c = 0; c < in.channels; ++c)
            out.at(f, c) = in.at(range.begin + f, c);
    return out;
}

// Maps a frame range defined at one sample rate onto another rate.
inline FrameRange rescale_range(FrameRange r, double from_rate, double to_rate,
                                std::size_t max_frames) {
    FrameRange out;
    out.begin = static_cast<std::size_t>(std::lround(r.begin * to_rate / from_rate));
    out.end = static_cast<std::size_t>(std::lround(r.end * to_rate / from_rate));
    if (out.end >= max_frames) out.end = max_frames - 1;
    if (out.begin > out.end) out.begin = out.end;
    return out;
}

}  // namespace kinpipe::segment
