#pragma once

#include <cmath>
#include <vector>

#include "kinpipe/common.hpp"
#include "kinpipe/signal.hpp"
#include "kinpipe/types.hpp"

namespace kinpipe::features {

struct FeatureConfig {
    double eps_speed = 1e-8;      // below this speed curvature is defined as 0
    double eps_curvature = 1e-12; // reciprocal guard for the radius
    double r_max = 1e6;           // straight-motion radius clamp, source units
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

// Channel order of the per-frame feature vector.
enum : std::size_t { kV = 0, kC = 1, kR = 2, kA = 3 };

// Per-frame [V, C, R, A] series at the camera rate.
struct KinematicSeries {
    Source source = Source::MoCap;
    double delta_t = 1.0 / 22.0;  // third velocity component of the flow formulation
    signal::UniformSeries vcra;   // 4 channels

    double rate() const { return vcra.rate; }
    std::size_t frames() const { return vcra.frames(); }
};

// Velocity vectors for either source. Optical flow descriptors (u, v) become
// (u, v, delta_t) with delta_t = 1/rate; MoCap positions become the
// finite-difference spatial velocity in source units per second.
inline std::vector<Vec3> velocity_vectors(const signal::UniformSeries& in, Source source) {
    std::vector<Vec3> out;
    if (source == Source::OpticalFlow) {
        if (in.channels != 2)
            throw ParamError("optical-flow velocity expects a 2-channel (u, v) series");
        const double dt = 1.0 / in.rate;
        out.resize(in.frames());
        for (std::size_t f = 0; f < in.frames(); ++f)
            out[f] = {in.at(f, 0), in.at(f, 1), dt};
        return out;
    }
    if (in.channels != 3)
        throw ParamError("mocap velocity expects a 3-channel position series");
    const std::size_t n = in.frames();
    if (n < 2) throw ParamError("velocity needs at least 2 frames");
    out.resize(n);
    const double r = in.rate;
    for (std::size_t f = 0; f < n; ++f) {
        auto diff = [&](std::size_t c) {
            if (f == 0) return (in.at(1, c) - in.at(0, c)) * r;
            if (f == n - 1) return (in.at(n - 1, c) - in.at(n - 2, c)) * r;
            return (in.at(f + 1, c) - in.at(f - 1, c)) * r / 2.0;
        };
        out[f] = {diff(0), diff(1), diff(2)};
    }
    return out;
}

inline double velocity_magnitude(const Vec3& v) {
    return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
}

// Backward difference of the velocity vectors, first frame copying the second
// so the series keeps its length. rate_scale converts the per-frame difference
// into per-second units for spatial (MoCap) velocities; the flow formulation
// keeps the raw per-frame difference (its constant third component cancels).
inline std::vector<Vec3> acceleration_vectors(const std::vector<Vec3>& v,
                                              double rate_scale = 1.0) {
    if (v.size() < 2) throw ParamError("acceleration needs at least 2 velocity samples");
    std::vector<Vec3> out(v.size());
    for (std::size_t f = 1; f < v.size(); ++f)
        out[f] = {(v[f].x - v[f - 1].x) * rate_scale, (v[f].y - v[f - 1].y) * rate_scale,
                  (v[f].z - v[f - 1].z) * rate_scale};
    out[0] = out[1];
    return out;
}

// C = |v x a| / |v|^3, zero below the speed floor.
inline double curvature(const Vec3& v, const Vec3& a, double eps_speed = 1e-8) {
    const double speed = velocity_magnitude(v);
    if (speed < eps_speed) return 0.0;
    const Vec3 cross{v.y * a.z - v.z * a.y, v.z * a.x - v.x * a.z, v.x * a.y - v.y * a.x};
    return velocity_magnitude(cross) / (speed * speed * speed);
}

// R = 1/C clamped to r_max; A = V/R. Both stay finite for any finite inputs.
inline std::pair<double, double> radius_and_angular_velocity(double V, double C,
                                                             const FeatureConfig& cfg = {}) {
    const double r = std::min(1.0 / std::max(C, cfg.eps_curvature), cfg.r_max);
    return {r, V / r};
}

// Per-frame [V, C, R, A] extraction for a transport-segmented, filtered
// series already at the camera rate.
inline KinematicSeries extract_features(const signal::UniformSeries& in, Source source,
                                        const FeatureConfig& cfg = {}) {
    const auto vel = velocity_vectors(in, source);
    const auto acc = acceleration_vectors(vel, source == Source::MoCap ? in.rate : 1.0);
    KinematicSeries ks;
    ks.source = source;
    ks.delta_t = 1.0 / in.rate;
    ks.vcra = signal::UniformSeries(in.rate, 4, vel.size());
    for (std::size_t f = 0; f < vel.size(); ++f) {
        const double V = velocity_magnitude(vel[f]);
        const double C = curvature(vel[f], acc[f], cfg.eps_speed);
        const auto [R, A] = radius_and_angular_velocity(V, C, cfg);
        ks.vcra.at(f, kV) = V;
        ks.vcra.at(f, kC) = C;
        ks.vcra.at(f, kR) = R;
        ks.vcra.at(f, kA) = A;
    }
    return ks;
}

}  // namespace kinpipe::features
