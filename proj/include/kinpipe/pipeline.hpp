#pragma once

#include <cmath>
#include <optional>

#include "kinpipe/config.hpp"
#include "kinpipe/experiment.hpp"
#include "kinpipe/features.hpp"
#include "kinpipe/ingest.hpp"
#include "kinpipe/segment.hpp"
#include "kinpipe/signal.hpp"

namespace kinpipe::pipeline {

struct PreprocessResult {
    experiment::ProcessedTrial trial;
    segment::PhaseSegmentation seg;
    double seg_rate = 0.0;  // rate the segmentation indices refer to
    bool gap_warning = false;
    double gap_fraction = 0.0;
};

inline signal::UniformSeries track_to_series(const MarkerTrack& track) {
    signal::UniformSeries s(track.sample_rate, 3, track.samples.size());
    for (std::size_t i = 0; i < track.samples.size(); ++i) {
        s.at(i, 0) = track.samples[i].x;
        s.at(i, 1) = track.samples[i].y;
        s.at(i, 2) = track.samples[i].z;
    }
    return s;
}

// MoCap path: marker selection, gap repair, position filtering, velocity-norm
// segmentation at the capture rate, then the transport slice is downsampled
// to the camera rate and turned into the per-frame feature series.
inline PreprocessResult preprocess_mocap_trial(const TrialRecord& rec,
                                               const PipelineConfig& cfg) {
    if (rec.tracks.empty()) throw UnusableTrialError("trial carries no marker tracks");
    const MarkerTrack& chosen = ingest::select_marker(rec.tracks);
    const double gap_fraction = chosen.gap_fraction();
    const MarkerTrack filled = ingest::fill_gaps(chosen);

    const signal::UniformSeries raw = track_to_series(filled);
    const signal::UniformSeries positions =
        signal::butterworth_lowpass(raw, cfg.position_filter_order, cfg.position_cutoff_hz);

    const signal::UniformSeries vnorm = segment::velocity_norm(positions);
    const signal::UniformSeries vnorm_f =
        signal::butterworth_lowpass(vnorm, cfg.vnorm_filter_order, cfg.vnorm_cutoff_hz);
    const segment::PhaseSegmentation seg = segment::segment_transport(vnorm_f, cfg.seg);

    const signal::UniformSeries transport = segment::slice(positions, seg.transport);
    const signal::UniformSeries cam_rate = signal::downsample(transport, cfg.camera_rate_hz);

    PreprocessResult res;
    res.trial.meta = rec.meta;
    res.trial.features = features::extract_features(cam_rate, Source::MoCap, cfg.feat);
    res.trial.transport_duration_s = segment::transport_duration(seg, positions.rate);
    res.trial.gap_fraction = gap_fraction;
    res.seg = seg;
    res.seg_rate = positions.rate;
    res.gap_fraction = gap_fraction;
    res.gap_warning = gap_fraction > 0.5;
    return res;
}

// Camera path: the descriptor stream is smoothed at the flow cutoff, segmented
// on its own magnitude profile (or on rescaled MoCap boundaries when
// configured), and the transport slice feeds the flow feature formulation.
inline PreprocessResult preprocess_flow_trial(
    const TrialRecord& rec, const PipelineConfig& cfg,
    const std::optional<segment::PhaseSegmentation>& mocap_seg = std::nullopt,
    double mocap_rate = 100.0) {
    if (!rec.flow_descriptors.has_value())
        throw UnusableTrialError("trial carries no flow descriptor stream");
    const signal::UniformSeries raw = flow::to_series(*rec.flow_descriptors);
    const signal::UniformSeries uv =
        signal::butterworth_lowpass(raw, cfg.flow_filter_order, cfg.flow_cutoff_hz);

    segment::PhaseSegmentation seg;
    if (cfg.flow_reuse_mocap_segmentation && mocap_seg.has_value()) {
        seg = *mocap_seg;
        seg.transport = segment::rescale_range(mocap_seg->transport, mocap_rate, uv.rate,
                                               uv.frames());
    } else {
        const signal::UniformSeries mag = signal::magnitude_series(uv);
        const signal::UniformSeries mag_f =
            signal::butterworth_lowpass(mag, cfg.vnorm_filter_order, cfg.vnorm_cutoff_hz);
        seg = segment::segment_transport(mag_f, cfg.seg);
    }

    const signal::UniformSeries transport = segment::slice(uv, seg.transport);

    PreprocessResult res;
    res.trial.meta = rec.meta;
    res.trial.features = features::extract_features(transport, Source::OpticalFlow, cfg.feat);
    res.trial.transport_duration_s = segment::transport_duration(seg, uv.rate);
    res.seg = seg;
    res.seg_rate = uv.rate;
    return res;
}

inline PreprocessResult preprocess_trial(const TrialRecord& rec, const PipelineConfig& cfg,
                                         Source source) {
    if (source == Source::MoCap) return preprocess_mocap_trial(rec, cfg);
    if (cfg.flow_reuse_mocap_segmentation && !rec.tracks.empty()) {
        const PreprocessResult mocap = preprocess_mocap_trial(rec, cfg);
        return preprocess_flow_trial(rec, cfg, mocap.seg, mocap.seg_rate);
    }
    return preprocess_flow_trial(rec, cfg);
}

}  // namespace kinpipe::pipeline
