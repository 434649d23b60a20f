#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "kinpipe/flow.hpp"
#include "kinpipe/rng.hpp"

namespace testutil {

// Smooth band-limited random texture, evaluable at any real coordinate so
// frames can be rendered at exact subpixel offsets.
class Texture {
public:
    explicit Texture(std::uint64_t seed, int waves = 24) {
        kinpipe::Rng rng(seed);
        for (int i = 0; i < waves; ++i) {
            const double wavelength = rng.uniform(7.0, 40.0);
            const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
            kx_.push_back(2.0 * std::numbers::pi * std::cos(angle) / wavelength);
            ky_.push_back(2.0 * std::numbers::pi * std::sin(angle) / wavelength);
            phase_.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
            amp_.push_back(rng.uniform(0.5, 1.0));
        }
        double total = 0.0;
        for (double a : amp_) total += a;
        for (double& a : amp_) a /= total;  // keeps values within +/- 1
    }

    // in [0, 1]
    double operator()(double x, double y) const {
        double v = 0.0;
        for (std::size_t i = 0; i < amp_.size(); ++i)
            v += amp_[i] * std::sin(kx_[i] * x + ky_[i] * y + phase_[i]);
        return 0.5 + 0.35 * v;
    }

private:
    std::vector<double> kx_, ky_, phase_, amp_;
};

// Full-frame texture translated by (dx, dy).
inline kinpipe::flow::Image textured_frame(const Texture& tex, std::size_t w, std::size_t h,
                                           double dx, double dy) {
    kinpipe::flow::Image im(w, h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            im.at(y, x) = tex(static_cast<double>(x) - dx, static_cast<double>(y) - dy);
    return im;
}

// Textured square whose top-left corner sits at (x0 + dx, y0 + dy); the
// texture rides with the square. The background is either uniform or, when a
// background texture is given, static and textured (anchoring the flow to
// zero there, as in a real camera scene).
inline kinpipe::flow::Image square_frame(const Texture& tex, std::size_t w, std::size_t h,
                                         double x0, double y0, std::size_t side, double dx,
                                         double dy, const Texture* background = nullptr) {
    kinpipe::flow::Image im(w, h, 0.5);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double lx = static_cast<double>(x) - (x0 + dx);
            const double ly = static_cast<double>(y) - (y0 + dy);
            if (lx >= 0.0 && ly >= 0.0 && lx < static_cast<double>(side) &&
                ly < static_cast<double>(side))
                im.at(y, x) = tex(lx, ly);
            else if (background)
                im.at(y, x) = (*background)(static_cast<double>(x), static_cast<double>(y));
        }
    return im;
}

struct RegionStats {
    double mean_u = 0.0, mean_v = 0.0, median_u = 0.0, median_v = 0.0;
    std::size_t count = 0;
};

inline RegionStats field_stats(const kinpipe::flow::FlowField& field, std::size_t x_lo,
                               std::size_t y_lo, std::size_t x_hi, std::size_t y_hi) {
    RegionStats st;
    std::vector<double> us, vs;
    for (std::size_t y = y_lo; y < y_hi; ++y)
        for (std::size_t x = x_lo; x < x_hi; ++x) {
            us.push_back(field.u.at(y, x));
            vs.push_back(field.v.at(y, x));
        }
    st.count = us.size();
    for (double u : us) st.mean_u += u;
    for (double v : vs) st.mean_v += v;
    st.mean_u /= static_cast<double>(st.count);
    st.mean_v /= static_cast<double>(st.count);
    std::sort(us.begin(), us.end());
    std::sort(vs.begin(), vs.end());
    st.median_u = us[us.size() / 2];
    st.median_v = vs[vs.size() / 2];
    return st;
}

}  // namespace testutil
