#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kinpipe/config.hpp"
#include "kinpipe/experiment.hpp"
#include "kinpipe/ingest.hpp"
#include "kinpipe/pipeline.hpp"
#include "kinpipe/synth.hpp"

namespace kinpipe::cli {

namespace fs = std::filesystem;

namespace detail {

inline std::string trial_stem(int subject, int trial) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "s%02d_t%03d", subject, trial);
    return buf;
}

inline void write_feature_csv(const fs::path& path, const features::KinematicSeries& ks) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << "frame,V,C,R,A\n";
    char buf[256];
    for (std::size_t f = 0; f < ks.frames(); ++f) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", f,
                      ks.vcra.at(f, features::kV), ks.vcra.at(f, features::kC),
                      ks.vcra.at(f, features::kR), ks.vcra.at(f, features::kA));
        os << buf;
    }
}

inline features::KinematicSeries read_feature_csv(const fs::path& path, double rate,
                                                  Source source) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw ParseError(path.string() + ": empty feature file");
    std::vector<std::array<double, 4>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::array<double, 4> r{};
        unsigned long frame = 0;
        if (std::sscanf(line.c_str(), "%lu,%lf,%lf,%lf,%lf", &frame, &r[0], &r[1], &r[2],
                        &r[3]) != 5)
            throw ParseError(path.string() + ": bad feature row '" + line + "'");
        rows.push_back(r);
    }
    features::KinematicSeries ks;
    ks.source = source;
    ks.delta_t = 1.0 / rate;
    ks.vcra = signal::UniformSeries(rate, 4, rows.size());
    for (std::size_t f = 0; f < rows.size(); ++f)
        for (std::size_t c = 0; c < 4; ++c) ks.vcra.at(f, c) = rows[f][c];
    return ks;
}

inline std::string range_str(const segment::FrameRange& r) {
    return std::to_string(r.begin) + ":" + std::to_string(r.end);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth: write a seeded synthetic cohort (trial CSVs, flow streams, manifest)
// ---------------------------------------------------------------------------

inline int cmd_synth(const PipelineConfig& cfg) {
    const fs::path out(cfg.out_dir);
    fs::create_directories(out / "trials");
    fs::create_directories(out / "flow");

    synth::SynthConfig sc = cfg.synth;
    sc.seed = cfg.seed;
    const auto trials = synth::generate_synthetic_trials(sc);

    std::vector<ManifestEntry> manifest;
    manifest.reserve(trials.size());
    for (const auto& t : trials) {
        const auto& meta = t.record.meta;
        const std::string stem = detail::trial_stem(meta.subject_id, meta.trial_index);
        {
            std::ofstream os(out / "trials" / (stem + ".csv"));
            if (!os) throw IoError("cannot write trial " + stem);
            ingest::write_trial_csv(os, t.record.tracks);
        }
        {
            std::ofstream os(out / "flow" / (stem + ".csv"));
            if (!os) throw IoError("cannot write flow stream " + stem);
            flow::write_flow_csv(os, *t.record.flow_descriptors);
        }
        ManifestEntry e;
        e.path = "trials/" + stem + ".csv";
        e.subject_id = meta.subject_id;
        e.trial_index = meta.trial_index;
        e.glass_code = meta.glass_code();
        e.route = meta.route;
        e.slot = meta.slot;
        e.flow_path = "flow/" + stem + ".csv";
        e.flow_rate = sc.camera_rate;
        manifest.push_back(std::move(e));
    }
    ingest::write_manifest(out / "manifest.json", manifest);
    std::cout << "synth: wrote " << trials.size() << " trials to " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// preprocess: manifest -> per-trial feature CSVs + index + segmentation report
// ---------------------------------------------------------------------------

inline int cmd_preprocess(const PipelineConfig& cfg) {
    const fs::path out(cfg.out_dir);
    fs::path manifest_path(cfg.manifest);
    if (manifest_path.is_relative() && !fs::exists(manifest_path))
        manifest_path = out / cfg.manifest;
    const auto manifest = ingest::read_manifest(manifest_path);
    const fs::path base = manifest_path.parent_path();

    const std::string source_name = to_string(cfg.source);
    const fs::path feat_dir = out / ("features_" + source_name);
    fs::create_directories(feat_dir);

    nlohmann::json index = nlohmann::json::array();
    std::ofstream seg_report(out / ("segmentation_" + source_name + ".csv"));
    seg_report << "trial,status,reach,transport,depart,threshold\n";

    std::size_t ok = 0, failed = 0;
    for (const auto& entry : manifest) {
        const std::string stem = detail::trial_stem(entry.subject_id, entry.trial_index);
        nlohmann::json rec;
        rec["subject_id"] = entry.subject_id;
        rec["trial_index"] = entry.trial_index;
        rec["glass_code"] = to_string(entry.glass_code);
        rec["route"] = to_string(entry.route);
        rec["shelf_slot"] = std::string(1, entry.slot);
        try {
            TrialRecord trial = [&]() {
                if (cfg.source == Source::MoCap || cfg.flow_reuse_mocap_segmentation) {
                    TrialRecord t = ingest::load_trial(base / entry.path, entry);
                    if (cfg.source == Source::OpticalFlow) {
                        if (entry.flow_path.empty())
                            throw UnusableTrialError(stem + ": manifest has no flow stream");
                        std::ifstream is(base / entry.flow_path);
                        if (!is) throw IoError("cannot open flow stream " + entry.flow_path);
                        t.flow_descriptors = flow::read_flow_csv(is, entry.flow_rate);
                    }
                    return t;
                }
                // flow-only path: the trial CSV is not needed
                TrialRecord t = ingest::make_trial_record(entry, {});
                if (entry.flow_path.empty())
                    throw UnusableTrialError(stem + ": manifest has no flow stream");
                const fs::path fp = base / entry.flow_path;
                if (fs::is_directory(fp)) {
                    const auto frames = flow::read_frame_dir(fp, entry.flow_rate);
                    t.flow_descriptors =
                        flow::flow_descriptor_series(frames, cfg.flow, cfg.flow_filter_order,
                                                     cfg.flow_cutoff_hz);
                } else {
                    std::ifstream is(fp);
                    if (!is) throw IoError("cannot open flow stream " + entry.flow_path);
                    t.flow_descriptors = flow::read_flow_csv(is, entry.flow_rate);
                }
                return t;
            }();

            const auto res = pipeline::preprocess_trial(trial, cfg, cfg.source);
            const std::string rel = "features_" + source_name + "/" + stem + ".csv";
            detail::write_feature_csv(out / rel, res.trial.features);
            rec["file"] = rel;
            rec["frames"] = res.trial.features.frames();
            rec["duration_s"] = res.trial.transport_duration_s;
            rec["gap_fraction"] = res.gap_fraction;
            rec["gap_warning"] = res.gap_warning;
            rec["status"] = "ok";
            seg_report << stem << ",ok," << detail::range_str(res.seg.reach) << ","
                       << detail::range_str(res.seg.transport) << ","
                       << detail::range_str(res.seg.depart) << "," << res.seg.threshold_value
                       << "\n";
            ++ok;
        } catch (const Error& e) {
            rec["status"] = e.what();
            seg_report << stem << ",excluded: " << e.what() << ",,,,\n";
            ++failed;
        }
        index.push_back(std::move(rec));
    }
    {
        std::ofstream os(out / ("features_" + source_name + "_index.json"));
        os << index.dump(2) << "\n";
    }
    const double rate =
        manifest.empty() ? 0.0
                         : 100.0 * static_cast<double>(failed) / static_cast<double>(manifest.size());
    std::cout << "preprocess(" << source_name << "): " << ok << " ok, " << failed
              << " excluded (" << rate << "%)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train-eval: features -> balanced tensors -> LOSO cross-validation reports
// ---------------------------------------------------------------------------

struct LoadedTrials {
    std::vector<experiment::ProcessedTrial> trials;
};

inline std::vector<experiment::ProcessedTrial> load_processed_trials(const PipelineConfig& cfg) {
    const fs::path out(cfg.out_dir);
    const std::string source_name = to_string(cfg.source);
    const fs::path index_path = out / ("features_" + source_name + "_index.json");
    std::ifstream is(index_path);
    if (!is) throw IoError("missing feature index " + index_path.string() +
                           " (run preprocess first)");
    nlohmann::json index;
    try {
        is >> index;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(index_path.string() + ": " + e.what());
    }
    std::vector<experiment::ProcessedTrial> trials;
    for (const auto& rec : index) {
        if (rec.at("status").get<std::string>() != "ok") continue;
        experiment::ProcessedTrial t;
        t.meta.subject_id = rec.at("subject_id").get<int>();
        t.meta.trial_index = rec.at("trial_index").get<int>();
        const GlassCode code = glass_code_from_string(rec.at("glass_code").get<std::string>());
        t.meta.weight = weight_of(code);
        t.meta.carefulness = carefulness_of(code);
        t.meta.route = route_from_string(rec.at("route").get<std::string>());
        t.meta.slot = rec.at("shelf_slot").get<std::string>()[0];
        t.transport_duration_s = rec.at("duration_s").get<double>();
        t.gap_fraction = rec.value("gap_fraction", 0.0);
        t.features = detail::read_feature_csv(out / rec.at("file").get<std::string>(),
                                              cfg.camera_rate_hz, cfg.source);
        trials.push_back(std::move(t));
    }
    if (trials.empty()) throw ParamError("feature index holds no usable trials");
    return trials;
}

inline std::string cv_stem(const PipelineConfig& cfg, Task task) {
    std::string stem = "cv_" + to_string(task) + "_" + to_string(cfg.source) + "_" +
                       nn::to_string(cfg.arch) + "_" + to_string(cfg.layout);
    if (cfg.subset != Subset::None) stem += "_subset-" + to_string(cfg.subset);
    return stem;
}

inline nn::ModelSpec make_model_spec(const PipelineConfig& cfg) {
    nn::ModelSpec spec = cfg.arch == nn::Arch::CnnLstmDnn
                             ? nn::build_cnn_lstm_dnn(cfg.layout == Layout::Resampled32
                                                          ? cfg.resample_frames
                                                          : cfg.pad_frames)
                             : nn::build_masked_lstm_dnn(cfg.layout == Layout::Resampled32
                                                             ? cfg.resample_frames
                                                             : cfg.pad_frames);
    spec.n_subsequences = cfg.model.n_subsequences;
    spec.conv_filters = cfg.model.conv_filters;
    spec.conv_kernel = cfg.model.conv_kernel;
    spec.conv_l1 = cfg.model.conv_l1;
    spec.conv_l2 = cfg.model.conv_l2;
    spec.dense_l2 = cfg.model.dense_l2;
    spec.dropout_rate = cfg.model.dropout_rate;
    spec.output = cfg.model.output;
    return spec;
}

inline int cmd_train_eval(const PipelineConfig& cfg) {
    const fs::path out(cfg.out_dir);
    auto trials = load_processed_trials(cfg);

    // outlier policy: exclusion happens before balancing
    std::vector<std::pair<int, std::string>> exclusions;
    std::set<int> excluded;
    if (cfg.exclude_outliers == OutlierPolicy::Auto) {
        const auto rep = experiment::outlier_subject_report(trials, cfg.outlier_mad_factor);
        for (int s : rep.flagged) {
            excluded.insert(s);
            exclusions.emplace_back(s, "duration outlier (median beyond " +
                                           std::to_string(cfg.outlier_mad_factor) +
                                           " group MADs)");
        }
    } else if (cfg.exclude_outliers == OutlierPolicy::List) {
        for (int s : cfg.exclude_subjects)
            if (excluded.insert(s).second) exclusions.emplace_back(s, "excluded by list");
    }
    if (!excluded.empty()) {
        std::vector<experiment::ProcessedTrial> kept;
        for (auto& t : trials)
            if (!excluded.count(t.meta.subject_id)) kept.push_back(std::move(t));
        trials = std::move(kept);
        if (trials.empty()) throw ParamError("outlier exclusion removed every trial");
    }

    const auto balanced = experiment::balance_classes(
        trials, static_cast<std::size_t>(cfg.class_cap), cfg.seed);
    const auto ds = experiment::assemble(balanced, cfg.layout, cfg.task,
                                         static_cast<std::size_t>(cfg.resample_frames),
                                         static_cast<std::size_t>(cfg.pad_frames));
    experiment::save_dataset(
        out / ("dataset_" + to_string(cfg.source) + "_" + to_string(cfg.layout) + ".kds"), ds);

    nn::ModelSpec spec = make_model_spec(cfg);
    nn::TrainConfig train_cfg = cfg.train;
    experiment::LosoOptions opt;
    opt.seed = cfg.seed;
    opt.standardize = cfg.standardize_features;
    opt.population_std = cfg.population_std;
    opt.n_threads = cfg.n_threads;

    std::vector<nn::TrainedModel> fold_models;
    experiment::CvReport report;
    if (cfg.subset == Subset::None) {
        report = experiment::loso_cross_validate(ds, spec, train_cfg, opt, &fold_models);
    } else {
        report = experiment::subset_analysis(ds, cfg.subset, spec, train_cfg, opt);
    }
    for (const auto& e : exclusions) report.exclusions.push_back(e);

    const std::string stem = cv_stem(cfg, report.task);
    {
        std::ofstream os(out / (stem + ".json"));
        os << experiment::cv_report_to_json(report).dump(2) << "\n";
    }
    if (!fold_models.empty()) {
        fs::create_directories(out / "checkpoints");
        for (std::size_t i = 0; i < fold_models.size() && i < report.folds.size(); ++i)
            nn::save_checkpoint(out / "checkpoints" /
                                    (stem + "_fold" +
                                     std::to_string(report.folds[i].held_out_subject) + ".kpnn"),
                                fold_models[i]);
    }
    std::printf("%s: test %.2f%% +/- %.2f%% (train %.2f%% +/- %.2f%%), %zu folds\n",
                stem.c_str(), 100.0 * report.test_mean, 100.0 * report.test_std,
                100.0 * report.train_mean, 100.0 * report.train_std, report.folds.size());
    return 0;
}

// ---------------------------------------------------------------------------
// report: render every CvReport in the out dir plus the duration statistics
// ---------------------------------------------------------------------------

inline int cmd_report(const PipelineConfig& cfg, const std::string& format) {
    const fs::path out(cfg.out_dir);
    std::vector<experiment::CvReport> reports;
    if (fs::exists(out))
        for (const auto& e : fs::directory_iterator(out)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("cv_", 0) == 0 && e.path().extension() == ".json") {
                std::ifstream is(e.path());
                nlohmann::json j;
                is >> j;
                reports.push_back(experiment::cv_report_from_json(j));
            }
        }
    std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
        return std::tuple(to_string(a.task), nn::to_string(a.arch), to_string(a.source)) <
               std::tuple(to_string(b.task), nn::to_string(b.arch), to_string(b.source));
    });
    if (reports.empty()) {
        std::cout << "report: no cross-validation reports under " << out.string() << "\n";
        return 0;
    }

    std::ostringstream body;
    if (format == "csv") {
        body << "task,arch,layout,source,train_mean,train_std,test_mean,test_std,folds\n";
        for (const auto& r : reports) {
            char buf[256];
            std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%.4f,%.4f,%.4f,%.4f,%zu\n",
                          to_string(r.task).c_str(), nn::to_string(r.arch).c_str(),
                          to_string(r.layout).c_str(), to_string(r.source).c_str(),
                          100.0 * r.train_mean, 100.0 * r.train_std, 100.0 * r.test_mean,
                          100.0 * r.test_std, r.folds.size());
            body << buf;
        }
    } else {
        body << "Model accuracy (%, mean and standard deviation over LOSO folds)\n";
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%-12s %-16s %-12s %-7s %-16s %-16s %s\n", "task",
                      "arch", "layout", "source", "train", "test", "folds");
        body << buf;
        for (const auto& r : reports) {
            char train_s[48], test_s[48];
            std::snprintf(train_s, sizeof(train_s), "%.2f +/- %.2f", 100.0 * r.train_mean,
                          100.0 * r.train_std);
            std::snprintf(test_s, sizeof(test_s), "%.2f +/- %.2f", 100.0 * r.test_mean,
                          100.0 * r.test_std);
            std::snprintf(buf, sizeof(buf), "%-12s %-16s %-12s %-7s %-16s %-16s %zu\n",
                          to_string(r.task).c_str(), nn::to_string(r.arch).c_str(),
                          to_string(r.layout).c_str(), to_string(r.source).c_str(), train_s,
                          test_s, r.folds.size());
            body << buf;
            for (const auto& [subject, reason] : r.exclusions)
                body << "    excluded subject " << subject << ": " << reason << "\n";
        }
    }

    // duration / outlier section from whichever preprocess index exists
    for (const std::string source_name : {"mocap", "flow"}) {
        const fs::path index_path = out / ("features_" + source_name + "_index.json");
        if (!fs::exists(index_path)) continue;
        PipelineConfig c2 = cfg;
        c2.source = source_from_string(source_name);
        try {
            const auto trials = load_processed_trials(c2);
            const auto rep = experiment::outlier_subject_report(trials, cfg.outlier_mad_factor);
            if (format == "csv") {
                body << "subject,n,median_s,mad_s,flagged\n";
                for (const auto& s : rep.subjects) {
                    char buf[128];
                    std::snprintf(buf, sizeof(buf), "%d,%zu,%.4f,%.4f,%d\n", s.subject, s.n,
                                  s.median, s.mad, s.flagged ? 1 : 0);
                    body << buf;
                }
            } else {
                body << "\nNon-careful transport durations (" << source_name
                     << "), median +/- MAD seconds\n";
                for (const auto& s : rep.subjects) {
                    char buf[160];
                    std::snprintf(buf, sizeof(buf), "  subject %2d: %.2f +/- %.2f over %zu trials%s\n",
                                  s.subject, s.median, s.mad, s.n,
                                  s.flagged ? "  << flagged" : "");
                    body << buf;
                }
                char buf[200];
                std::snprintf(buf, sizeof(buf),
                              "  group median %.2f s, MAD %.2f s; Kruskal-Wallis chi2(%d, N=%zu) "
                              "= %.1f, p = %.3g\n",
                              rep.group_median, rep.group_mad, rep.kw.df,
                              [&] {
                                  std::size_t n = 0;
                                  for (const auto& s : rep.subjects) n += s.n;
                                  return n;
                              }(),
                              rep.kw.H, rep.kw.p);
                body << buf;
            }
        } catch (const Error&) {
            // no usable duration data for this source
        }
        break;
    }

    std::cout << body.str();
    const fs::path report_path = out / (format == "csv" ? "report.csv" : "report.txt");
    std::ofstream os(report_path);
    os << body.str();
    return 0;
}

// ---------------------------------------------------------------------------
// argument parsing
// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args) {
    PipelineConfig cfg;
    // --config is honored before the flag pass so flags override the file
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
        if (args[i] == "--config") {
            try {
                cfg = load_config(args[i + 1]);
            } catch (const Error& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
        }

    CLI::App app{"kinematic transport-movement classification pipeline"};
    app.require_subcommand(1);
    std::string config_path, source_s = to_string(cfg.source), task_s = to_string(cfg.task);
    std::string layout_s = to_string(cfg.layout), arch_s = nn::to_string(cfg.arch);
    std::string subset_s = to_string(cfg.subset), outliers_s = to_string(cfg.exclude_outliers);
    std::string format_s = "text";
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", cfg.seed, "master RNG seed");
    app.add_option("--out", cfg.out_dir, "output directory");
    app.add_option("--manifest", cfg.manifest, "trial manifest path");
    app.add_option("--source", source_s, "data source")->check(CLI::IsMember({"mocap", "flow"}));
    app.add_option("--task", task_s, "classification target")
        ->check(CLI::IsMember({"carefulness", "weight"}));
    app.add_option("--layout", layout_s, "dataset layout")
        ->check(CLI::IsMember({"resampled32", "padded132"}));
    app.add_option("--arch", arch_s, "model architecture")
        ->check(CLI::IsMember({"cnn-lstm-dnn", "masked-lstm-dnn"}));
    app.add_option("--subset", subset_s, "metadata filter for weight analyses")
        ->check(CLI::IsMember({"none", "scale-to-shelf", "low-care", "high-care"}));
    app.add_option("--exclude-outliers", outliers_s, "outlier-subject policy")
        ->check(CLI::IsMember({"auto", "none", "list"}));
    app.add_option("--exclude-subjects", cfg.exclude_subjects,
                   "subjects to drop when --exclude-outliers list");
    app.add_option("--threads", cfg.n_threads, "fold worker threads");
    app.fallthrough();

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic cohort");
    synth_cmd->add_option("--subjects", cfg.synth.n_subjects, "number of subjects");
    synth_cmd->add_option("--trials", cfg.synth.trials_per_subject, "trials per subject");
    auto* preprocess_cmd =
        app.add_subcommand("preprocess", "segment trials and extract features");
    auto* train_cmd = app.add_subcommand("train-eval", "run LOSO cross-validation");
    train_cmd->add_option("--max-epochs", cfg.train.max_epochs, "epoch cap");
    train_cmd->add_option("--batch-size", cfg.train.batch_size, "mini-batch size");
    auto* report_cmd = app.add_subcommand("report", "summarize results");
    report_cmd->add_option("--format", format_s, "text or csv")
        ->check(CLI::IsMember({"text", "csv"}));

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            app.exit(e);
            return 0;
        }
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        cfg.source = source_from_string(source_s);
        cfg.task = task_from_string(task_s);
        cfg.layout = layout_from_string(layout_s);
        cfg.arch = nn::arch_from_string(arch_s);
        cfg.subset = subset_from_string(subset_s);
        cfg.exclude_outliers = outlier_policy_from_string(outliers_s);
        if (synth_cmd->parsed()) return cmd_synth(cfg);
        if (preprocess_cmd->parsed()) return cmd_preprocess(cfg);
        if (train_cmd->parsed()) return cmd_train_eval(cfg);
        if (report_cmd->parsed()) return cmd_report(cfg, format_s);
    } catch (const ParamError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace kinpipe::cli
