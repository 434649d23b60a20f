#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kinpipe/common.hpp"
#include "kinpipe/signal.hpp"
#include "kinpipe/types.hpp"

namespace kinpipe::flow {

struct Image {
    std::size_t width = 0, height = 0;
    std::vector<double> px;  // row-major intensities

    Image() = default;
    Image(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), px(w * h, fill) {}

    double& at(std::size_t y, std::size_t x) { return px[y * width + x]; }
    double at(std::size_t y, std::size_t x) const { return px[y * width + x]; }
};

// Grayscale frame sequence, intensities in [0, 1].
struct FrameSequence {
    std::size_t width = 0, height = 0;
    double rate = 22.0;  // Hz
    std::vector<Image> frames;
};

// Per-pixel displacement field in pixels/frame.
struct FlowField {
    Image u, v;
};

struct FlowConfig {
    double magnitude_threshold = 0.5;  // px/frame, region-of-interest gate
    int pyramid_levels = 3;
    int iterations_per_level = 50;
    double smoothness = 15.0;  // Horn-Schunck alpha, calibrated for 8-bit intensities
};

struct RegionMean {
    double u = 0.0, v = 0.0;
    bool quiet = false;  // no pixel passed the magnitude threshold
};

namespace detail {

inline double sample_clamped(const Image& im, double y, double x) {
    // bilinear with border clamp
    const double xc = std::clamp(x, 0.0, static_cast<double>(im.width - 1));
    const double yc = std::clamp(y, 0.0, static_cast<double>(im.height - 1));
    const std::size_t x0 = static_cast<std::size_t>(xc);
    const std::size_t y0 = static_cast<std::size_t>(yc);
    const std::size_t x1 = std::min(x0 + 1, im.width - 1);
    const std::size_t y1 = std::min(y0 + 1, im.height - 1);
    const double fx = xc - static_cast<double>(x0);
    const double fy = yc - static_cast<double>(y0);
    const double top = im.at(y0, x0) + fx * (im.at(y0, x1) - im.at(y0, x0));
    const double bot = im.at(y1, x0) + fx * (im.at(y1, x1) - im.at(y1, x0));
    return top + fy * (bot - top);
}

inline Image downsample2(const Image& im) {
    // [1 2 1] separable blur then decimation by 2
    Image blur(im.width, im.height);
    for (std::size_t y = 0; y < im.height; ++y)
        for (std::size_t x = 0; x < im.width; ++x) {
            const std::size_t xm = x == 0 ? 0 : x - 1;
            const std::size_t xp = std::min(x + 1, im.width - 1);
            blur.at(y, x) = 0.25 * im.at(y, xm) + 0.5 * im.at(y, x) + 0.25 * im.at(y, xp);
        }
    Image blur2(im.width, im.height);
    for (std::size_t y = 0; y < im.height; ++y)
        for (std::size_t x = 0; x < im.width; ++x) {
            const std::size_t ym = y == 0 ? 0 : y - 1;
            const std::size_t yp = std::min(y + 1, im.height - 1);
            blur2.at(y, x) = 0.25 * blur.at(ym, x) + 0.5 * blur.at(y, x) + 0.25 * blur.at(yp, x);
        }
    Image out(std::max<std::size_t>(im.width / 2, 1), std::max<std::size_t>(im.height / 2, 1));
    for (std::size_t y = 0; y < out.height; ++y)
        for (std::size_t x = 0; x < out.width; ++x) out.at(y, x) = blur2.at(y * 2, x * 2);
    return out;
}

inline Image upsample_to(const Image& im, std::size_t w, std::size_t h, double gain) {
    Image out(w, h);
    const double sx = static_cast<double>(im.width) / static_cast<double>(w);
    const double sy = static_cast<double>(im.height) / static_cast<double>(h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            out.at(y, x) = gain * sample_clamped(im, y * sy, x * sx);
    return out;
}

// Weighted 8-neighbour average used by the Horn-Schunck smoothness term.
inline Image laplacian_avg(const Image& im) {
    Image out(im.width, im.height);
    const auto W = im.width, H = im.height;
    for (std::size_t y = 0; y < H; ++y) {
        const std::size_t ym = y == 0 ? 0 : y - 1;
        const std::size_t yp = std::min(y + 1, H - 1);
        for (std::size_t x = 0; x < W; ++x) {
            const std::size_t xm = x == 0 ? 0 : x - 1;
            const std::size_t xp = std::min(x + 1, W - 1);
            const double edges = im.at(ym, x) + im.at(yp, x) + im.at(y, xm) + im.at(y, xp);
            const double corners =
                im.at(ym, xm) + im.at(ym, xp) + im.at(yp, xm) + im.at(yp, xp);
            out.at(y, x) = edges / 6.0 + corners / 12.0;
        }
    }
    return out;
}

}  // namespace detail

// Dense displacement estimate between two frames: pyramidal Horn-Schunck
// (brightness constancy + quadratic smoothness). The smoothness weight follows
// the classic 0..255 intensity convention, so inputs in [0,1] are rescaled
// internally before the gradients are formed.
inline FlowField dense_flow(const Image& prev, const Image& next, const FlowConfig& cfg = {}) {
    if (prev.width != next.width || prev.height != next.height)
        throw ParamError("dense_flow frames must have identical dimensions");
    if (prev.width < 4 || prev.height < 4) throw ParamError("frames too small for dense flow");

    constexpr double kIntensityScale = 255.0;
    std::vector<Image> pyr1{prev}, pyr2{next};
    for (int l = 1; l < cfg.pyramid_levels; ++l) {
        if (pyr1.back().width < 8 || pyr1.back().height < 8) break;
        pyr1.push_back(detail::downsample2(pyr1.back()));
        pyr2.push_back(detail::downsample2(pyr2.back()));
    }

    Image u(pyr1.back().width, pyr1.back().height);
    Image v(pyr1.back().width, pyr1.back().height);
    const double alpha2 = cfg.smoothness * cfg.smoothness;

    for (std::size_t lvl = pyr1.size(); lvl-- > 0;) {
        const Image& i1 = pyr1[lvl];
        const Image& i2 = pyr2[lvl];
        const std::size_t W = i1.width, H = i1.height;
        if (u.width != W || u.height != H) {
            u = detail::upsample_to(u, W, H, 2.0);
            v = detail::upsample_to(v, W, H, 2.0);
        }
        // Warp the second frame by the current estimate.
        Image i2w(W, H);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                i2w.at(y, x) = detail::sample_clamped(i2, y + v.at(y, x), x + u.at(y, x));
        // Spatiotemporal gradients of the average image.
        Image ix(W, H), iy(W, H), it(W, H);
        for (std::size_t y = 0; y < H; ++y) {
            const std::size_t ym = y == 0 ? 0 : y - 1;
            const std::size_t yp = std::min(y + 1, H - 1);
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t xm = x == 0 ? 0 : x - 1;
                const std::size_t xp = std::min(x + 1, W - 1);
                const double gx1 = (i1.at(y, xp) - i1.at(y, xm)) / 2.0;
                const double gx2 = (i2w.at(y, xp) - i2w.at(y, xm)) / 2.0;
                const double gy1 = (i1.at(yp, x) - i1.at(ym, x)) / 2.0;
                const double gy2 = (i2w.at(yp, x) - i2w.at(ym, x)) / 2.0;
                ix.at(y, x) = kIntensityScale * 0.5 * (gx1 + gx2);
                iy.at(y, x) = kIntensityScale * 0.5 * (gy1 + gy2);
                it.at(y, x) = kIntensityScale * (i2w.at(y, x) - i1.at(y, x));
            }
        }
        // Jacobi iterations for the incremental flow.
        Image du(W, H), dv(W, H);
        for (int iter = 0; iter < cfg.iterations_per_level; ++iter) {
            const Image dub = detail::laplacian_avg(du);
            const Image dvb = detail::laplacian_avg(dv);
            for (std::size_t i = 0; i < W * H; ++i) {
                const double gx = ix.px[i], gy = iy.px[i];
                const double t =
                    (gx * dub.px[i] + gy * dvb.px[i] + it.px[i]) / (alpha2 + gx * gx + gy * gy);
                du.px[i] = dub.px[i] - gx * t;
                dv.px[i] = dvb.px[i] - gy * t;
            }
        }
        for (std::size_t i = 0; i < W * H; ++i) {
            u.px[i] += du.px[i];
            v.px[i] += dv.px[i];
        }
    }
    return {std::move(u), std::move(v)};
}

// Mean flow over pixels whose magnitude clears the threshold; (0,0) with the
// quiet flag when nothing in the frame moves.
inline RegionMean threshold_and_average(const FlowField& field, double magnitude_threshold) {
    if (magnitude_threshold < 0.0) throw ParamError("magnitude threshold must be >= 0");
    double su = 0.0, sv = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < field.u.px.size(); ++i) {
        const double uu = field.u.px[i], vv = field.v.px[i];
        if (std::sqrt(uu * uu + vv * vv) >= magnitude_threshold) {
            su += uu;
            sv += vv;
            ++count;
        }
    }
    if (count == 0) return {0.0, 0.0, true};
    return {su / static_cast<double>(count), sv / static_cast<double>(count), false};
}

// Full camera-side descriptor extraction: dense flow per consecutive pair,
// supra-threshold averaging, then a zero-phase low-pass (order 2, 4 Hz by
// convention) over the assembled series.
inline FlowSeries flow_descriptor_series(const FrameSequence& frames, const FlowConfig& cfg = {},
                                         int filter_order = 2, double filter_cutoff_hz = 4.0) {
    if (frames.frames.size() < 3)
        throw ParamError("flow descriptor series needs at least 3 frames");
    signal::UniformSeries uv(frames.rate, 2, frames.frames.size() - 1);
    for (std::size_t f = 0; f + 1 < frames.frames.size(); ++f) {
        const FlowField field = dense_flow(frames.frames[f], frames.frames[f + 1], cfg);
        const RegionMean m = threshold_and_average(field, cfg.magnitude_threshold);
        uv.at(f, 0) = m.u;
        uv.at(f, 1) = m.v;
    }
    const signal::UniformSeries filtered =
        signal::butterworth_lowpass(uv, filter_order, filter_cutoff_hz);
    FlowSeries out;
    out.rate = frames.rate;
    out.samples.resize(filtered.frames());
    for (std::size_t f = 0; f < filtered.frames(); ++f)
        out.samples[f] = {filtered.at(f, 0), filtered.at(f, 1)};
    return out;
}

inline signal::UniformSeries to_series(const FlowSeries& fs) {
    signal::UniformSeries out(fs.rate, 2, fs.samples.size());
    for (std::size_t f = 0; f < fs.samples.size(); ++f) {
        out.at(f, 0) = fs.samples[f][0];
        out.at(f, 1) = fs.samples[f][1];
    }
    return out;
}

// ---------------------------------------------------------------------------
// File formats: PGM frames in, descriptor CSV out
// ---------------------------------------------------------------------------

// Grayscale PGM (P2/P5) and color PPM (P6) frames; color collapses to
// luminance with the 0.299/0.587/0.114 weights.
inline Image read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open frame " + path.string());
    std::string magic;
    is >> magic;
    if (magic != "P5" && magic != "P2" && magic != "P6")
        throw ParseError(path.string() + ": only PGM (P2/P5) or PPM (P6) frames are supported");
    auto next_token = [&]() {
        std::string tok;
        while (is >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(is, rest);
                continue;
            }
            return tok;
        }
        throw ParseError(path.string() + ": truncated PGM header");
    };
    const std::size_t w = std::stoul(next_token());
    const std::size_t h = std::stoul(next_token());
    const double maxval = std::stod(next_token());
    Image im(w, h);
    if (magic == "P2") {
        for (std::size_t i = 0; i < w * h; ++i) {
            double v;
            if (!(is >> v)) throw ParseError(path.string() + ": truncated P2 data");
            im.px[i] = v / maxval;
        }
        return im;
    }
    is.get();  // single whitespace after maxval
    const std::size_t channels = magic == "P6" ? 3 : 1;
    std::vector<unsigned char> raw(w * h * channels);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(is.gcount()) != raw.size())
        throw ParseError(path.string() + ": truncated pixel data");
    for (std::size_t i = 0; i < w * h; ++i) {
        if (channels == 1) {
            im.px[i] = raw[i] / maxval;
        } else {
            im.px[i] = (0.299 * raw[3 * i] + 0.587 * raw[3 * i + 1] + 0.114 * raw[3 * i + 2]) /
                       maxval;
        }
    }
    return im;
}

inline void write_pgm(const std::filesystem::path& path, const Image& im) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write frame " + path.string());
    os << "P5\n" << im.width << " " << im.height << "\n255\n";
    std::vector<unsigned char> raw(im.px.size());
    for (std::size_t i = 0; i < im.px.size(); ++i)
        raw[i] = static_cast<unsigned char>(std::clamp(im.px[i], 0.0, 1.0) * 255.0 + 0.5);
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

// Loads a directory of numbered PGM frames (lexicographic order).
inline FrameSequence read_frame_dir(const std::filesystem::path& dir, double rate) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    FrameSequence seq;
    seq.rate = rate;
    for (const auto& f : files) {
        Image im = read_pgm(f);
        if (seq.frames.empty()) {
            seq.width = im.width;
            seq.height = im.height;
        } else if (im.width != seq.width || im.height != seq.height) {
            throw ParseError("frame " + f.string() + " has mismatched dimensions");
        }
        seq.frames.push_back(std::move(im));
    }
    if (seq.frames.empty()) throw ParseError("no frames found in " + dir.string());
    return seq;
}

inline void write_flow_csv(std::ostream& os, const FlowSeries& fs) {
    os << "t,u_mean,v_mean\n";
    char buf[128];
    for (std::size_t f = 0; f < fs.samples.size(); ++f) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n",
                      static_cast<double>(f) / fs.rate, fs.samples[f][0], fs.samples[f][1]);
        os << buf;
    }
}

inline FlowSeries read_flow_csv(std::istream& is, double rate) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty flow stream");
    FlowSeries fs;
    fs.rate = rate;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        double t, u, v;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &t, &u, &v) != 3)
            throw ParseError("flow stream line " + std::to_string(line_no) + ": bad row");
        fs.samples.push_back({u, v});
    }
    if (fs.samples.empty()) throw ParseError("flow stream has no samples");
    return fs;
}

}  // namespace kinpipe::flow
