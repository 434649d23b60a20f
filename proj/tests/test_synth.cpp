#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "kinpipe/pipeline.hpp"
#include "kinpipe/synth.hpp"

using namespace kinpipe;
using namespace kinpipe::synth;

TEST(MinimumJerk, BoundaryAndPeak) {
    EXPECT_DOUBLE_EQ(minimum_jerk(0.0), 0.0);
    EXPECT_DOUBLE_EQ(minimum_jerk(1.0), 1.0);
    EXPECT_DOUBLE_EQ(minimum_jerk(0.5), 0.5);  // symmetric midpoint
    // analytic peak speed of the unit profile: 30/16 at tau = 1/2
    const double h = 1e-6;
    const double peak = (minimum_jerk(0.5 + h) - minimum_jerk(0.5 - h)) / (2.0 * h);
    EXPECT_NEAR(peak, 1.875, 1e-6);
}

TEST(Generator, RejectsBadConfig) {
    SynthConfig cfg;
    cfg.n_subjects = 0;
    EXPECT_THROW(generate_synthetic_trials(cfg), ParamError);
    cfg.n_subjects = 2;
    cfg.trials_per_subject = 0;
    EXPECT_THROW(generate_synthetic_trials(cfg), ParamError);
    cfg.trials_per_subject = 4;
    cfg.heavy_speed_multiplier = 1.4;
    EXPECT_THROW(generate_synthetic_trials(cfg), ParamError);
}

TEST(Generator, DeterministicGivenSeed) {
    SynthConfig cfg;
    cfg.n_subjects = 2;
    cfg.trials_per_subject = 8;
    cfg.seed = 99;
    const auto a = generate_synthetic_trials(cfg);
    const auto b = generate_synthetic_trials(cfg);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].record.tracks.size(), b[i].record.tracks.size());
        for (std::size_t m = 0; m < a[i].record.tracks.size(); ++m) {
            const auto& ta = a[i].record.tracks[m].samples;
            const auto& tb = b[i].record.tracks[m].samples;
            ASSERT_EQ(ta.size(), tb.size());
            for (std::size_t k = 0; k < ta.size(); ++k) {
                EXPECT_EQ(ta[k].x, tb[k].x);
                EXPECT_EQ(ta[k].valid, tb[k].valid);
            }
        }
        const auto& fa = a[i].record.flow_descriptors->samples;
        const auto& fb = b[i].record.flow_descriptors->samples;
        ASSERT_EQ(fa.size(), fb.size());
        for (std::size_t k = 0; k < fa.size(); ++k) EXPECT_EQ(fa[k][0], fb[k][0]);
    }
}

TEST(Generator, ClassAndRouteCoverage) {
    SynthConfig cfg;
    cfg.n_subjects = 3;
    cfg.trials_per_subject = 16;
    cfg.seed = 7;
    const auto trials = generate_synthetic_trials(cfg);
    ASSERT_EQ(trials.size(), 48u);
    std::map<GlassCode, int> by_code;
    int scale_to_shelf = 0;
    for (const auto& t : trials) {
        by_code[t.record.meta.glass_code()]++;
        if (t.record.meta.route == Route::ScaleToShelf) ++scale_to_shelf;
    }
    for (const auto& [code, n] : by_code) EXPECT_EQ(n, 12);
    EXPECT_EQ(scale_to_shelf, 24);  // alternating route blocks
}

TEST(Generator, DurationModelSeparatesClasses) {
    SynthConfig cfg;
    cfg.n_subjects = 15;
    cfg.trials_per_subject = 32;  // 480 trials
    cfg.seed = 11;
    const auto trials = generate_synthetic_trials(cfg);
    std::vector<double> careful, swift;
    for (const auto& t : trials)
        (t.record.meta.carefulness == CarefulnessClass::C2 ? careful : swift)
            .push_back(t.transport_duration_s);
    auto [med_careful, mad_c] = signal::median_and_mad(careful);
    auto [med_swift, mad_s] = signal::median_and_mad(swift);
    EXPECT_NEAR(med_careful, 2.04, 0.1);
    EXPECT_NEAR(med_swift, 1.47, 0.1);
    EXPECT_GT(mad_c, 0.0);
    EXPECT_GT(mad_s, 0.0);
}

TEST(Generator, HeavyTrialsAreSlower) {
    SynthConfig cfg;
    cfg.n_subjects = 8;
    cfg.trials_per_subject = 32;
    cfg.seed = 13;
    const auto trials = generate_synthetic_trials(cfg);
    std::vector<double> light, heavy;
    for (const auto& t : trials)
        if (t.record.meta.carefulness == CarefulnessClass::C1)
            (t.record.meta.weight == WeightClass::W2 ? heavy : light)
                .push_back(t.transport_duration_s);
    const double med_light = signal::median_and_mad(light).first;
    const double med_heavy = signal::median_and_mad(heavy).first;
    EXPECT_NEAR(med_heavy, med_light / cfg.heavy_speed_multiplier, 0.12);
}

TEST(Generator, MinimumJerkPeakSpeedMatchesClosedForm) {
    // noise-free single trial: the transport peak of the velocity norm must
    // hit 1.875 * distance / duration
    SynthConfig cfg;
    cfg.noise_mm = 0.0;
    cfg.occlusion_prob = 0.0;
    cfg.arc_height_mm = 0.0;
    cfg.seed = 17;
    Rng rng(mix_seed(cfg.seed, 1));
    const auto trial =
        generate_trial(cfg, 1, 0, GlassCode::W1C1, Route::ShelfToScale, 'B', rng);
    const auto& track = trial.record.tracks.front();
    const auto series = pipeline::track_to_series(track);
    const auto vnorm = segment::velocity_norm(series);
    // noise-free profile: phases are the contiguous runs of nonzero speed and
    // the transport is the middle one
    std::vector<std::pair<std::size_t, std::size_t>> active;
    bool in_run = false;
    for (std::size_t k = 0; k < vnorm.frames(); ++k) {
        const bool moving = vnorm.at(k, 0) > 1e-6;
        if (moving && !in_run) active.push_back({k, k});
        if (moving) active.back().second = k;
        in_run = moving;
    }
    ASSERT_EQ(active.size(), 3u);
    const auto [lo, hi] = active[1];
    const double dx = series.at(hi, 0) - series.at(lo, 0);
    const double dy = series.at(hi, 1) - series.at(lo, 1);
    const double dz = series.at(hi, 2) - series.at(lo, 2);
    const double distance = std::sqrt(dx * dx + dy * dy + dz * dz);
    const double expected = minimum_jerk_peak_speed(distance, trial.transport_duration_s);
    double measured = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) measured = std::max(measured, vnorm.at(k, 0));
    EXPECT_NEAR(measured, expected, 0.01 * expected);
}

TEST(Generator, TrialsSegmentCleanly) {
    SynthConfig cfg;
    cfg.n_subjects = 4;
    cfg.trials_per_subject = 16;
    cfg.seed = 19;
    PipelineConfig pc;
    const auto trials = generate_synthetic_trials(cfg);
    int failures = 0;
    for (const auto& t : trials) {
        try {
            const auto res = pipeline::preprocess_mocap_trial(t.record, pc);
            EXPECT_NEAR(res.trial.transport_duration_s, t.transport_duration_s, 0.35);
            EXPECT_GT(res.trial.features.frames(), 10u);
        } catch (const Error&) {
            ++failures;
        }
    }
    EXPECT_LE(failures, 1);  // expected exclusion rate well under 2%
}

TEST(Generator, FlowStreamTracksTransportToo) {
    SynthConfig cfg;
    cfg.n_subjects = 2;
    cfg.trials_per_subject = 8;
    cfg.seed = 23;
    PipelineConfig pc;
    pc.source = Source::OpticalFlow;
    const auto trials = generate_synthetic_trials(cfg);
    int failures = 0;
    for (const auto& t : trials) {
        try {
            const auto res = pipeline::preprocess_flow_trial(t.record, pc);
            EXPECT_GT(res.trial.features.frames(), 5u);
            EXPECT_NEAR(res.trial.transport_duration_s, t.transport_duration_s, 0.5);
        } catch (const Error&) {
            ++failures;
        }
    }
    EXPECT_LE(failures, 1);
}

TEST(Generator, OcclusionsAppearButStayRepairable) {
    SynthConfig cfg;
    cfg.n_subjects = 3;
    cfg.trials_per_subject = 8;
    cfg.occlusion_prob = 1.0;
    cfg.seed = 29;
    const auto trials = generate_synthetic_trials(cfg);
    std::size_t tracks_with_gaps = 0;
    for (const auto& t : trials)
        for (const auto& track : t.record.tracks) {
            if (track.valid_count() < track.samples.size()) ++tracks_with_gaps;
            EXPECT_GE(track.valid_count(), 2u);
            EXPECT_NO_THROW(ingest::fill_gaps(track));
        }
    EXPECT_GT(tracks_with_gaps, trials.size());  // most markers lost samples
}
