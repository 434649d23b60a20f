#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "kinpipe/common.hpp"
#include "kinpipe/features.hpp"
#include "kinpipe/flow.hpp"
#include "kinpipe/nn/train.hpp"
#include "kinpipe/segment.hpp"
#include "kinpipe/synth.hpp"
#include "kinpipe/types.hpp"

namespace kinpipe {

enum class OutlierPolicy { None, Auto, List };

inline std::string to_string(OutlierPolicy p) {
    switch (p) {
        case OutlierPolicy::None: return "none";
        case OutlierPolicy::Auto: return "auto";
        case OutlierPolicy::List: return "list";
    }
    return "?";
}

inline OutlierPolicy outlier_policy_from_string(const std::string& s) {
    if (s == "none") return OutlierPolicy::None;
    if (s == "auto") return OutlierPolicy::Auto;
    if (s == "list") return OutlierPolicy::List;
    throw SchemaError("exclude-outliers '" + s + "' is not auto/none/list");
}

// Every knob of the pipeline in one serializable struct. Defaults reproduce
// the published protocol constants; command-line flags override fields.
struct PipelineConfig {
    // paths
    std::string manifest = "manifest.json";
    std::string out_dir = "out";
    // marker-position filtering
    int position_filter_order = 2;
    double position_cutoff_hz = 10.0;
    // velocity-norm filtering ahead of segmentation
    int vnorm_filter_order = 4;
    double vnorm_cutoff_hz = 5.0;
    // camera descriptor filtering
    int flow_filter_order = 2;
    double flow_cutoff_hz = 4.0;
    double camera_rate_hz = 22.0;
    // segmentation
    segment::SegmentConfig seg;
    bool flow_reuse_mocap_segmentation = false;
    // dense optical flow
    flow::FlowConfig flow;
    // features
    features::FeatureConfig feat;
    bool standardize_features = true;
    // dataset
    int class_cap = 235;
    int resample_frames = 32;
    int pad_frames = 132;
    Source source = Source::MoCap;
    Task task = Task::Carefulness;
    Layout layout = Layout::Resampled32;
    Subset subset = Subset::None;
    nn::Arch arch = nn::Arch::CnnLstmDnn;
    OutlierPolicy exclude_outliers = OutlierPolicy::None;
    std::vector<int> exclude_subjects;
    double outlier_mad_factor = 3.0;
    bool population_std = true;
    int n_threads = 2;
    // model / training
    nn::ModelSpec model;
    nn::TrainConfig train;
    // synthetic cohort
    synth::SynthConfig synth;
    std::uint64_t seed = 0;
};

inline nlohmann::json config_to_json(const PipelineConfig& c) {
    nlohmann::json j;
    j["manifest"] = c.manifest;
    j["out_dir"] = c.out_dir;
    j["position_filter"] = {{"order", c.position_filter_order}, {"cutoff_hz", c.position_cutoff_hz}};
    j["vnorm_filter"] = {{"order", c.vnorm_filter_order}, {"cutoff_hz", c.vnorm_cutoff_hz}};
    j["flow_filter"] = {{"order", c.flow_filter_order}, {"cutoff_hz", c.flow_cutoff_hz}};
    j["camera_rate_hz"] = c.camera_rate_hz;
    j["segmentation"] = {{"prominence_fraction", c.seg.prominence_fraction},
                         {"min_separation_s", c.seg.min_separation_s},
                         {"threshold_fraction", c.seg.threshold_fraction},
                         {"flow_reuse_mocap", c.flow_reuse_mocap_segmentation}};
    j["dense_flow"] = {{"magnitude_threshold", c.flow.magnitude_threshold},
                       {"pyramid_levels", c.flow.pyramid_levels},
                       {"iterations_per_level", c.flow.iterations_per_level},
                       {"smoothness", c.flow.smoothness}};
    j["features"] = {{"eps_speed", c.feat.eps_speed},
                     {"eps_curvature", c.feat.eps_curvature},
                     {"r_max", c.feat.r_max},
                     {"standardize", c.standardize_features}};
    j["dataset"] = {{"class_cap", c.class_cap},
                    {"resample_frames", c.resample_frames},
                    {"pad_frames", c.pad_frames},
                    {"source", to_string(c.source)},
                    {"task", to_string(c.task)},
                    {"layout", to_string(c.layout)},
                    {"subset", to_string(c.subset)},
                    {"arch", nn::to_string(c.arch)},
                    {"exclude_outliers", to_string(c.exclude_outliers)},
                    {"exclude_subjects", c.exclude_subjects},
                    {"outlier_mad_factor", c.outlier_mad_factor},
                    {"population_std", c.population_std},
                    {"n_threads", c.n_threads}};
    j["model"] = {{"n_subsequences", c.model.n_subsequences},
                  {"conv_filters", c.model.conv_filters},
                  {"conv_kernel", c.model.conv_kernel},
                  {"conv_l1", c.model.conv_l1},
                  {"conv_l2", c.model.conv_l2},
                  {"dense_l2", c.model.dense_l2},
                  {"dropout_rate", c.model.dropout_rate},
                  {"output", c.model.output == nn::OutputMode::Sigmoid ? "sigmoid" : "softmax"}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"max_epochs", c.train.max_epochs},
                  {"patience", c.train.patience},
                  {"validation_fraction", c.train.validation_fraction},
                  {"stratified_validation", c.train.stratified_validation},
                  {"adam_lr", c.train.adam_lr},
                  {"adam_beta1", c.train.adam_beta1},
                  {"adam_beta2", c.train.adam_beta2},
                  {"adam_eps", c.train.adam_eps}};
    j["synth"] = {{"n_subjects", c.synth.n_subjects},
                  {"trials_per_subject", c.synth.trials_per_subject},
                  {"careful_duration_mean", c.synth.careful_duration_mean},
                  {"careful_duration_sd", c.synth.careful_duration_sd},
                  {"swift_duration_mean", c.synth.swift_duration_mean},
                  {"swift_duration_sd", c.synth.swift_duration_sd},
                  {"heavy_speed_multiplier", c.synth.heavy_speed_multiplier},
                  {"careful_arc_multiplier", c.synth.careful_arc_multiplier},
                  {"distance_duration_coupling", c.synth.distance_duration_coupling},
                  {"reference_distance_mm", c.synth.reference_distance_mm},
                  {"subject_duration_shift", c.synth.subject_duration_shift},
                  {"noise_mm", c.synth.noise_mm},
                  {"flow_noise_px", c.synth.flow_noise_px},
                  {"px_per_mm", c.synth.px_per_mm},
                  {"arc_height_mm", c.synth.arc_height_mm},
                  {"occlusion_prob", c.synth.occlusion_prob}};
    j["seed"] = c.seed;
    return j;
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    auto get = [](const nlohmann::json& obj, const char* key, auto& out) {
        if (obj.contains(key)) out = obj.at(key).get<std::decay_t<decltype(out)>>();
    };
    get(j, "manifest", c.manifest);
    get(j, "out_dir", c.out_dir);
    if (j.contains("position_filter")) {
        get(j["position_filter"], "order", c.position_filter_order);
        get(j["position_filter"], "cutoff_hz", c.position_cutoff_hz);
    }
    if (j.contains("vnorm_filter")) {
        get(j["vnorm_filter"], "order", c.vnorm_filter_order);
        get(j["vnorm_filter"], "cutoff_hz", c.vnorm_cutoff_hz);
    }
    if (j.contains("flow_filter")) {
        get(j["flow_filter"], "order", c.flow_filter_order);
        get(j["flow_filter"], "cutoff_hz", c.flow_cutoff_hz);
    }
    get(j, "camera_rate_hz", c.camera_rate_hz);
    if (j.contains("segmentation")) {
        const auto& s = j["segmentation"];
        get(s, "prominence_fraction", c.seg.prominence_fraction);
        get(s, "min_separation_s", c.seg.min_separation_s);
        get(s, "threshold_fraction", c.seg.threshold_fraction);
        get(s, "flow_reuse_mocap", c.flow_reuse_mocap_segmentation);
    }
    if (j.contains("dense_flow")) {
        const auto& f = j["dense_flow"];
        get(f, "magnitude_threshold", c.flow.magnitude_threshold);
        get(f, "pyramid_levels", c.flow.pyramid_levels);
        get(f, "iterations_per_level", c.flow.iterations_per_level);
        get(f, "smoothness", c.flow.smoothness);
    }
    if (j.contains("features")) {
        const auto& f = j["features"];
        get(f, "eps_speed", c.feat.eps_speed);
        get(f, "eps_curvature", c.feat.eps_curvature);
        get(f, "r_max", c.feat.r_max);
        get(f, "standardize", c.standardize_features);
    }
    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        get(d, "class_cap", c.class_cap);
        get(d, "resample_frames", c.resample_frames);
        get(d, "pad_frames", c.pad_frames);
        if (d.contains("source")) c.source = source_from_string(d["source"].get<std::string>());
        if (d.contains("task")) c.task = task_from_string(d["task"].get<std::string>());
        if (d.contains("layout")) c.layout = layout_from_string(d["layout"].get<std::string>());
        if (d.contains("subset")) c.subset = subset_from_string(d["subset"].get<std::string>());
        if (d.contains("arch")) c.arch = nn::arch_from_string(d["arch"].get<std::string>());
        if (d.contains("exclude_outliers"))
            c.exclude_outliers = outlier_policy_from_string(d["exclude_outliers"].get<std::string>());
        get(d, "exclude_subjects", c.exclude_subjects);
        get(d, "outlier_mad_factor", c.outlier_mad_factor);
        get(d, "population_std", c.population_std);
        get(d, "n_threads", c.n_threads);
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        get(m, "n_subsequences", c.model.n_subsequences);
        get(m, "conv_filters", c.model.conv_filters);
        get(m, "conv_kernel", c.model.conv_kernel);
        get(m, "conv_l1", c.model.conv_l1);
        get(m, "conv_l2", c.model.conv_l2);
        get(m, "dense_l2", c.model.dense_l2);
        get(m, "dropout_rate", c.model.dropout_rate);
        if (m.contains("output"))
            c.model.output = m["output"].get<std::string>() == "softmax"
                                 ? nn::OutputMode::Softmax
                                 : nn::OutputMode::Sigmoid;
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        get(t, "batch_size", c.train.batch_size);
        get(t, "max_epochs", c.train.max_epochs);
        get(t, "patience", c.train.patience);
        get(t, "validation_fraction", c.train.validation_fraction);
        get(t, "stratified_validation", c.train.stratified_validation);
        get(t, "adam_lr", c.train.adam_lr);
        get(t, "adam_beta1", c.train.adam_beta1);
        get(t, "adam_beta2", c.train.adam_beta2);
        get(t, "adam_eps", c.train.adam_eps);
    }
    if (j.contains("synth")) {
        const auto& s = j["synth"];
        get(s, "n_subjects", c.synth.n_subjects);
        get(s, "trials_per_subject", c.synth.trials_per_subject);
        get(s, "careful_duration_mean", c.synth.careful_duration_mean);
        get(s, "careful_duration_sd", c.synth.careful_duration_sd);
        get(s, "swift_duration_mean", c.synth.swift_duration_mean);
        get(s, "swift_duration_sd", c.synth.swift_duration_sd);
        get(s, "heavy_speed_multiplier", c.synth.heavy_speed_multiplier);
        get(s, "careful_arc_multiplier", c.synth.careful_arc_multiplier);
        get(s, "distance_duration_coupling", c.synth.distance_duration_coupling);
        get(s, "reference_distance_mm", c.synth.reference_distance_mm);
        get(s, "subject_duration_shift", c.synth.subject_duration_shift);
        get(s, "noise_mm", c.synth.noise_mm);
        get(s, "flow_noise_px", c.synth.flow_noise_px);
        get(s, "px_per_mm", c.synth.px_per_mm);
        get(s, "arc_height_mm", c.synth.arc_height_mm);
        get(s, "occlusion_prob", c.synth.occlusion_prob);
    }
    get(j, "seed", c.seed);
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace kinpipe
