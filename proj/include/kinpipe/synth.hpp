#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "kinpipe/common.hpp"
#include "kinpipe/rng.hpp"
#include "kinpipe/types.hpp"

namespace kinpipe::synth {

// Ground-truth trial generator. Each trial is a three-phase minimum-jerk
// movement (reach, transport, depart) sampled as four rigid hand markers at
// the MoCap rate plus a projected 2-D image-plane descriptor stream standing
// in for the camera's optical flow. Carefulness stretches the transport
// duration; weight shaves the peak speed.
struct SynthConfig {
    int n_subjects = 15;
    int trials_per_subject = 64;
    // transport duration model, seconds
    double careful_duration_mean = 2.04;
    double careful_duration_sd = 0.18;
    double swift_duration_mean = 1.47;
    double swift_duration_sd = 0.15;
    // heavy glasses move slower: peak-speed multiplier in (0, 1]
    double heavy_speed_multiplier = 0.92;
    // careful transports carry the glass higher; generator parameter giving
    // the curvature channel a class signature alongside the duration model
    double careful_arc_multiplier = 1.45;
    // Fitts-like sublinear stretch of the duration with distance
    // (T *= (d/d_ref)^coupling); 0 gives the plain class duration model
    double distance_duration_coupling = 0.5;
    double reference_distance_mm = 555.0;  // median shelf-to-scale distance
    // additive per-subject transport-duration shift, seconds (index = subject-1);
    // empty = homogeneous cohort
    std::vector<double> subject_duration_shift;
    // sampling
    double mocap_rate = 100.0;
    double camera_rate = 22.0;
    double px_per_mm = 0.28;
    // noise
    double noise_mm = 1.2;
    double flow_noise_px = 0.3;
    // secondary phases
    double reach_duration_mean = 0.85;
    double reach_duration_sd = 0.08;
    double dwell_s = 0.25;  // grasp/release pauses separating the peaks
    double arc_height_mm = 60.0;  // vertical bow of the transport path
    // synthetic occlusions
    double occlusion_prob = 0.6;  // chance that a marker has gaps at all
    int max_gaps_per_marker = 2;
    double gap_min_s = 0.04;
    double gap_max_s = 0.15;
    std::uint64_t seed = 0;
};

inline double minimum_jerk(double tau) {
    return tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
}

// Peak speed of a minimum-jerk point-to-point move: 1.875 * distance / T.
inline double minimum_jerk_peak_speed(double distance, double duration) {
    return 1.875 * distance / duration;
}

namespace detail {

struct Point {
    double x, y, z;
};

inline Point lerp_jerk(const Point& a, const Point& b, double tau) {
    const double s = minimum_jerk(tau);
    return {a.x + (b.x - a.x) * s, a.y + (b.y - a.y) * s, a.z + (b.z - a.z) * s};
}

// 8 labelled shelf slots: two shelves (left/right of the table), two levels,
// two columns each. Millimeters in a table-centered frame.
inline Point slot_position(ShelfSlot slot) {
    const int i = slot - 'A';
    const double side = (i < 4) ? -1.0 : 1.0;
    const double level = (i % 4 < 2) ? 200.0 : 480.0;
    const double column = (i % 2 == 0) ? 380.0 : 540.0;
    return {side * 420.0, column, level};
}

inline Point scale_position() { return {0.0, 260.0, 80.0}; }
// right hand rests right of the body midline, so every phase stays visible
// in the camera plane
inline Point rest_position() { return {180.0, 120.0, 20.0}; }

struct PhasePlan {
    Point from, to;
    double start_s, duration_s;
    double arc_mm;  // vertical bow height
};

inline Point eval_phases(const std::vector<PhasePlan>& phases, const Point& rest, double t) {
    Point cur = rest;
    for (const auto& ph : phases) {
        if (t < ph.start_s) break;
        if (t <= ph.start_s + ph.duration_s) {
            const double tau = (t - ph.start_s) / ph.duration_s;
            Point p = lerp_jerk(ph.from, ph.to, tau);
            p.z += ph.arc_mm * 4.0 * tau * (1.0 - tau);
            return p;
        }
        cur = ph.to;
    }
    return cur;
}

}  // namespace detail

struct SyntheticTrial {
    TrialRecord record;      // tracks + flow descriptors + labels
    double transport_duration_s;  // ground truth, for generator-level checks
};

inline SyntheticTrial generate_trial(const SynthConfig& cfg, int subject, int trial_index,
                                     GlassCode code, Route route, ShelfSlot slot, Rng& rng) {
    using detail::Point;
    const CarefulnessClass care = carefulness_of(code);
    const WeightClass weight = weight_of(code);

    double transport_T =
        care == CarefulnessClass::C2
            ? rng.positive_normal(cfg.careful_duration_mean, cfg.careful_duration_sd)
            : rng.positive_normal(cfg.swift_duration_mean, cfg.swift_duration_sd);
    if (subject - 1 < static_cast<int>(cfg.subject_duration_shift.size()))
        transport_T += cfg.subject_duration_shift[static_cast<std::size_t>(subject - 1)];
    // heavier glass, slower peak: stretch the duration to conserve displacement
    if (weight == WeightClass::W2) transport_T /= cfg.heavy_speed_multiplier;

    const double reach_T = rng.positive_normal(cfg.reach_duration_mean, cfg.reach_duration_sd);
    const double depart_T = rng.positive_normal(cfg.reach_duration_mean, cfg.reach_duration_sd);

    auto jitter = [&](Point p) {
        return Point{p.x + rng.normal(0.0, 8.0), p.y + rng.normal(0.0, 8.0),
                     p.z + rng.normal(0.0, 8.0)};
    };
    const Point rest = jitter(detail::rest_position());
    const Point shelf = jitter(detail::slot_position(slot));
    const Point scale = jitter(detail::scale_position());
    const Point start = route == Route::ShelfToScale ? shelf : scale;
    const Point stop = route == Route::ShelfToScale ? scale : shelf;

    // optional Fitts-like stretch; medians stay at the model centers because
    // the reference distance matches the median slot distance
    if (cfg.distance_duration_coupling != 0.0) {
        const double transport_distance =
            std::sqrt((stop.x - start.x) * (stop.x - start.x) +
                      (stop.y - start.y) * (stop.y - start.y) +
                      (stop.z - start.z) * (stop.z - start.z));
        transport_T *= std::pow(transport_distance / cfg.reference_distance_mm,
                                cfg.distance_duration_coupling);
    }

    const double d = cfg.dwell_s;
    const double transport_arc = cfg.arc_height_mm *
                                 (care == CarefulnessClass::C2 ? cfg.careful_arc_multiplier : 1.0) *
                                 rng.uniform(0.75, 1.25);
    std::vector<detail::PhasePlan> phases;
    phases.push_back({rest, start, d, reach_T, cfg.arc_height_mm * 0.4});
    phases.push_back({start, stop, d + reach_T + d, transport_T, transport_arc});
    phases.push_back({stop, rest, d + reach_T + d + transport_T + d, depart_T,
                      cfg.arc_height_mm * 0.4});
    const double total = d + reach_T + d + transport_T + d + depart_T + d;

    SyntheticTrial out;
    out.transport_duration_s = transport_T;
    TrialRecord& rec = out.record;
    rec.meta.subject_id = subject;
    rec.meta.trial_index = trial_index;
    rec.meta.weight = weight;
    rec.meta.carefulness = care;
    rec.meta.route = route;
    rec.meta.slot = slot;

    // Rigid marker offsets: the hand moves as one body.
    const std::array<Point, 4> offsets = {Point{24.0, 12.0, 6.0}, Point{-22.0, 10.0, 4.0},
                                          Point{0.0, 0.0, 0.0}, Point{-4.0, -38.0, -6.0}};
    const std::size_t n_ptr = static_cast<std::size_t>(std::floor(total * cfg.mocap_rate)) + 1;
    for (std::size_t mi = 0; mi < kAllMarkers.size(); ++mi) {
        MarkerTrack track;
        track.marker = kAllMarkers[mi];
        track.sample_rate = cfg.mocap_rate;
        track.samples.reserve(n_ptr);
        for (std::size_t k = 0; k < n_ptr; ++k) {
            const double t = static_cast<double>(k) / cfg.mocap_rate;
            const Point p = detail::eval_phases(phases, rest, t);
            MarkerSample s;
            s.t = t;
            s.x = p.x + offsets[mi].x + rng.normal(0.0, cfg.noise_mm);
            s.y = p.y + offsets[mi].y + rng.normal(0.0, cfg.noise_mm);
            s.z = p.z + offsets[mi].z + rng.normal(0.0, cfg.noise_mm);
            s.valid = true;
            track.samples.push_back(s);
        }
        // carve out occlusion gaps
        if (rng.uniform() < cfg.occlusion_prob) {
            const int n_gaps = 1 + static_cast<int>(rng.index(
                                       static_cast<std::size_t>(cfg.max_gaps_per_marker)));
            for (int g = 0; g < n_gaps; ++g) {
                const std::size_t len = static_cast<std::size_t>(
                    rng.uniform(cfg.gap_min_s, cfg.gap_max_s) * cfg.mocap_rate);
                if (len == 0 || len + 4 >= n_ptr) continue;
                const std::size_t at = 2 + rng.index(n_ptr - len - 4);
                for (std::size_t k = at; k < at + len; ++k) track.samples[k].valid = false;
            }
        }
        rec.tracks.push_back(std::move(track));
    }

    // Camera-plane descriptor stream: per-frame hand displacement in pixels.
    // Horizontal image axis follows world x, vertical follows world z.
    FlowSeries fs;
    fs.rate = cfg.camera_rate;
    const std::size_t n_cam = static_cast<std::size_t>(std::floor(total * cfg.camera_rate)) + 1;
    for (std::size_t k = 0; k + 1 < n_cam; ++k) {
        const double t0 = static_cast<double>(k) / cfg.camera_rate;
        const double t1 = static_cast<double>(k + 1) / cfg.camera_rate;
        const Point p0 = detail::eval_phases(phases, rest, t0);
        const Point p1 = detail::eval_phases(phases, rest, t1);
        const double u = (p1.x - p0.x) * cfg.px_per_mm + rng.normal(0.0, cfg.flow_noise_px);
        const double v = -(p1.z - p0.z) * cfg.px_per_mm + rng.normal(0.0, cfg.flow_noise_px);
        fs.samples.push_back({u, v});
    }
    rec.flow_descriptors = std::move(fs);
    return out;
}

// Deterministic cohort. Codes cycle every trial so classes stay balanced at
// any cohort size; each code sweeps all eight slots in seeded shuffled order
// (a balanced code x slot design, decorrelating class from distance) and
// alternates the route direction.
inline std::vector<SyntheticTrial> generate_synthetic_trials(const SynthConfig& cfg) {
    if (cfg.n_subjects < 1) throw ParamError("n_subjects must be >= 1");
    if (cfg.trials_per_subject < 1) throw ParamError("trials_per_subject must be >= 1");
    if (!(cfg.heavy_speed_multiplier > 0.0) || cfg.heavy_speed_multiplier > 1.0)
        throw ParamError("heavy_speed_multiplier must be in (0, 1]");
    constexpr std::array<GlassCode, 4> codes = {GlassCode::W1C1, GlassCode::W2C1,
                                                GlassCode::W1C2, GlassCode::W2C2};
    std::vector<SyntheticTrial> out;
    out.reserve(static_cast<std::size_t>(cfg.n_subjects * cfg.trials_per_subject));
    for (int s = 1; s <= cfg.n_subjects; ++s) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(s)));
        Rng schedule_rng(mix_seed(cfg.seed, 0x5c4ed ^ static_cast<std::uint64_t>(s)));
        std::array<std::vector<ShelfSlot>, 4> slot_decks;
        for (int k = 0; k < cfg.trials_per_subject; ++k) {
            const std::size_t c = static_cast<std::size_t>(k) % 4;
            auto& deck = slot_decks[c];
            if (deck.empty()) {
                for (char slot = 'A'; slot <= 'H'; ++slot) deck.push_back(slot);
                schedule_rng.shuffle(deck);
            }
            const ShelfSlot slot = deck.back();
            deck.pop_back();
            const Route route = (k / 4) % 2 == 0 ? Route::ShelfToScale : Route::ScaleToShelf;
            out.push_back(generate_trial(cfg, s, k, codes[c], route, slot, rng));
        }
    }
    return out;
}

}  // namespace kinpipe::synth
