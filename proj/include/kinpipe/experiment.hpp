#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinpipe/common.hpp"
#include "kinpipe/features.hpp"
#include "kinpipe/nn/train.hpp"
#include "kinpipe/rng.hpp"
#include "kinpipe/signal.hpp"
#include "kinpipe/types.hpp"

namespace kinpipe::experiment {

// One preprocessed trial: labels plus the per-frame feature series.
struct ProcessedTrial {
    TrialMeta meta;
    features::KinematicSeries features;
    double transport_duration_s = 0.0;
    double gap_fraction = 0.0;
};

// Assembled classifier input for one layout.
struct DatasetTensor {
    Layout layout = Layout::Resampled32;
    Source source = Source::MoCap;
    Task task = Task::Carefulness;
    std::size_t n_trials = 0, n_frames = 0, n_features = 4;
    std::vector<double> data;        // n_trials x n_frames x n_features
    std::vector<std::uint8_t> mask;  // n_trials x n_frames (Padded132 only)
    std::vector<int> labels;         // class index per trial for `task`
    std::vector<TrialMeta> meta;     // retained for filters and fold splits

    double at(std::size_t t, std::size_t f, std::size_t c) const {
        return data[(t * n_frames + f) * n_features + c];
    }
};

struct FoldResult {
    int held_out_subject = 0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    int stopped_epoch = 0;
    std::size_t n_test = 0;
};

struct CvReport {
    Task task = Task::Carefulness;
    Source source = Source::MoCap;
    nn::Arch arch = nn::Arch::CnnLstmDnn;
    Layout layout = Layout::Resampled32;
    std::uint64_t seed = 0;
    std::vector<FoldResult> folds;
    double train_mean = 0.0, train_std = 0.0;
    double test_mean = 0.0, test_std = 0.0;
    bool population_std = true;
    std::vector<std::pair<int, std::string>> exclusions;  // subject, reason
};

// ---------------------------------------------------------------------------
// Dataset construction
// ---------------------------------------------------------------------------

inline int class_index(const TrialMeta& m, Task task) {
    if (task == Task::Carefulness) return m.carefulness == CarefulnessClass::C2 ? 1 : 0;
    return m.weight == WeightClass::W2 ? 1 : 0;
}

// Caps every glass class at per_class_cap by seeded sampling without
// replacement, then shuffles the merged order.
inline std::vector<ProcessedTrial> balance_classes(const std::vector<ProcessedTrial>& trials,
                                                   std::size_t per_class_cap,
                                                   std::uint64_t seed) {
    std::map<GlassCode, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < trials.size(); ++i)
        by_class[trials[i].meta.glass_code()].push_back(i);
    Rng rng(mix_seed(seed, 0xba1a));
    std::vector<std::size_t> chosen;
    for (auto& [code, idx] : by_class) {
        if (idx.size() <= per_class_cap) {
            chosen.insert(chosen.end(), idx.begin(), idx.end());
            continue;
        }
        const auto pick = rng.sample_without_replacement(idx.size(), per_class_cap);
        for (std::size_t p : pick) chosen.push_back(idx[p]);
    }
    rng.shuffle(chosen);
    std::vector<ProcessedTrial> out;
    out.reserve(chosen.size());
    for (std::size_t i : chosen) out.push_back(trials[i]);
    return out;
}

// Re-samples (Resampled32) or zero-pads (Padded132) every trial and attaches
// one-hot-able task labels. Route/slot metadata rides along but is never fed
// to the classifier.
inline DatasetTensor assemble(const std::vector<ProcessedTrial>& trials, Layout layout,
                              Task task, std::size_t resample_frames = 32,
                              std::size_t pad_frames = 132) {
    DatasetTensor ds;
    ds.layout = layout;
    ds.task = task;
    ds.n_trials = trials.size();
    ds.n_frames = layout == Layout::Resampled32 ? resample_frames : pad_frames;
    if (!trials.empty()) ds.source = trials.front().features.source;
    ds.data.assign(ds.n_trials * ds.n_frames * ds.n_features, 0.0);
    if (layout == Layout::Padded132) ds.mask.assign(ds.n_trials * ds.n_frames, 0);
    ds.labels.resize(ds.n_trials);
    ds.meta.resize(ds.n_trials);
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const auto& tr = trials[i];
        ds.meta[i] = tr.meta;
        ds.labels[i] = class_index(tr.meta, task);
        if (layout == Layout::Resampled32) {
            const auto r = signal::resample_fixed(tr.features.vcra, resample_frames);
            std::memcpy(&ds.data[i * ds.n_frames * ds.n_features], r.data.data(),
                        r.data.size() * sizeof(double));
        } else {
            if (tr.features.frames() > pad_frames)
                throw SequenceOverflowError(
                    "trial subject " + std::to_string(tr.meta.subject_id) + " index " +
                    std::to_string(tr.meta.trial_index) + " has " +
                    std::to_string(tr.features.frames()) + " frames > " +
                    std::to_string(pad_frames));
            const auto p = signal::zero_pad(tr.features.vcra, pad_frames);
            std::memcpy(&ds.data[i * ds.n_frames * ds.n_features], p.data.data(),
                        p.data.size() * sizeof(double));
            std::memcpy(&ds.mask[i * ds.n_frames], p.mask.data(), p.mask.size());
        }
    }
    return ds;
}

inline DatasetTensor filter_dataset(const DatasetTensor& ds,
                                    const std::function<bool(const TrialMeta&)>& keep) {
    DatasetTensor out;
    out.layout = ds.layout;
    out.source = ds.source;
    out.task = ds.task;
    out.n_frames = ds.n_frames;
    out.n_features = ds.n_features;
    for (std::size_t i = 0; i < ds.n_trials; ++i) {
        if (!keep(ds.meta[i])) continue;
        out.meta.push_back(ds.meta[i]);
        out.labels.push_back(ds.labels[i]);
        const std::size_t row = ds.n_frames * ds.n_features;
        out.data.insert(out.data.end(), ds.data.begin() + static_cast<std::ptrdiff_t>(i * row),
                        ds.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * row));
        if (!ds.mask.empty())
            out.mask.insert(out.mask.end(),
                            ds.mask.begin() + static_cast<std::ptrdiff_t>(i * ds.n_frames),
                            ds.mask.begin() + static_cast<std::ptrdiff_t>((i + 1) * ds.n_frames));
    }
    out.n_trials = out.meta.size();
    return out;
}

// Relabels the tensor for a (possibly different) task.
inline void relabel(DatasetTensor& ds, Task task) {
    ds.task = task;
    for (std::size_t i = 0; i < ds.n_trials; ++i) ds.labels[i] = class_index(ds.meta[i], task);
}

// ---------------------------------------------------------------------------
// Rank statistics
// ---------------------------------------------------------------------------

namespace detail {

// Regularized upper incomplete gamma Q(a, x), series + continued fraction.
inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw ParamError("gamma_q domain");
    if (x == 0.0) return 1.0;
    const double gln = std::lgamma(a);
    if (x < a + 1.0) {
        // P(a,x) by series, return 1 - P
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
    }
    // continued fraction for Q
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - gln) * h;
}

}  // namespace detail

// Chi-square survival function.
inline double chi2_sf(double x, int df) {
    return detail::gamma_q(static_cast<double>(df) / 2.0, x / 2.0);
}

struct KruskalWallisResult {
    double H = 0.0;
    int df = 0;
    double p = 1.0;
};

// Rank-based Kruskal-Wallis H with midrank tie handling and the standard tie
// correction; p from the chi-square survival function.
inline KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw ParamError("kruskal_wallis needs at least 2 groups");
    std::vector<std::pair<double, std::size_t>> pooled;  // value, group
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].empty()) throw ParamError("kruskal_wallis groups must be non-empty");
        for (double v : groups[g]) pooled.emplace_back(v, g);
    }
    const std::size_t N = pooled.size();
    std::sort(pooled.begin(), pooled.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<double> rank_sum(groups.size(), 0.0);
    double tie_term = 0.0;
    std::size_t i = 0;
    while (i < N) {
        std::size_t j = i;
        while (j + 1 < N && pooled[j + 1].first == pooled[i].first) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        const double t = static_cast<double>(j - i + 1);
        if (t > 1.0) tie_term += t * t * t - t;
        for (std::size_t k = i; k <= j; ++k) rank_sum[pooled[k].second] += midrank;
        i = j + 1;
    }
    const double n = static_cast<double>(N);
    double h = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g)
        h += rank_sum[g] * rank_sum[g] / static_cast<double>(groups[g].size());
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
    const double correction = 1.0 - tie_term / (n * n * n - n);
    if (correction <= 0.0)
        throw DegenerateDataError("all values identical; H statistic undefined");
    h /= correction;
    KruskalWallisResult r;
    r.H = h;
    r.df = static_cast<int>(groups.size()) - 1;
    r.p = chi2_sf(h, r.df);
    return r;
}

// ---------------------------------------------------------------------------
// Outlier screening on transport durations
// ---------------------------------------------------------------------------

struct SubjectDurationStats {
    int subject = 0;
    std::size_t n = 0;
    double median = 0.0;
    double mad = 0.0;
    bool flagged = false;
};

struct OutlierReport {
    std::vector<SubjectDurationStats> subjects;
    double group_median = 0.0;
    double group_mad = 0.0;
    double mad_factor = 3.0;
    KruskalWallisResult kw;
    std::vector<int> flagged;
};

// Median/MAD of the non-careful transport durations per subject, a
// Kruskal-Wallis test across subjects, and a robust flag for subjects whose
// median sits more than mad_factor group-MADs from the group median.
inline OutlierReport outlier_subject_report(const std::vector<ProcessedTrial>& trials,
                                            double mad_factor = 3.0) {
    std::map<int, std::vector<double>> durations;
    for (const auto& t : trials)
        if (t.meta.carefulness == CarefulnessClass::C1)
            durations[t.meta.subject_id].push_back(t.transport_duration_s);
    if (durations.size() < 2)
        throw ParamError("outlier report needs non-careful trials from >= 2 subjects");
    OutlierReport rep;
    rep.mad_factor = mad_factor;
    std::vector<double> medians;
    std::vector<std::vector<double>> groups;
    for (auto& [subject, values] : durations) {
        auto [med, mad] = signal::median_and_mad(values);
        rep.subjects.push_back({subject, values.size(), med, mad, false});
        medians.push_back(med);
        groups.push_back(values);
    }
    auto [gmed, gmad] = signal::median_and_mad(medians);
    rep.group_median = gmed;
    rep.group_mad = gmad;
    rep.kw = kruskal_wallis(groups);
    for (auto& s : rep.subjects) {
        if (std::fabs(s.median - gmed) > mad_factor * gmad) {
            s.flagged = true;
            rep.flagged.push_back(s.subject);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Leave-one-subject-out cross-validation
// ---------------------------------------------------------------------------

struct LosoOptions {
    std::uint64_t seed = 0;
    bool standardize = true;       // per-channel, training fold statistics only
    bool population_std = true;    // aggregate spread convention
    int n_threads = 2;             // folds are independent; results merge by subject order
};

namespace detail {

// Per-channel standardization fitted on the training rows (unmasked frames
// only); padded frames stay exactly zero so masking semantics are preserved.
struct ChannelStats {
    std::vector<double> mean, sd;
};

inline ChannelStats fit_stats(const DatasetTensor& ds, const std::vector<std::size_t>& rows) {
    ChannelStats st;
    st.mean.assign(ds.n_features, 0.0);
    st.sd.assign(ds.n_features, 0.0);
    std::vector<double> count(ds.n_features, 0.0);
    for (std::size_t r : rows)
        for (std::size_t f = 0; f < ds.n_frames; ++f) {
            if (!ds.mask.empty() && !ds.mask[r * ds.n_frames + f]) continue;
            for (std::size_t c = 0; c < ds.n_features; ++c) {
                st.mean[c] += ds.at(r, f, c);
                count[c] += 1.0;
            }
        }
    for (std::size_t c = 0; c < ds.n_features; ++c) st.mean[c] /= std::max(count[c], 1.0);
    for (std::size_t r : rows)
        for (std::size_t f = 0; f < ds.n_frames; ++f) {
            if (!ds.mask.empty() && !ds.mask[r * ds.n_frames + f]) continue;
            for (std::size_t c = 0; c < ds.n_features; ++c) {
                const double d = ds.at(r, f, c) - st.mean[c];
                st.sd[c] += d * d;
            }
        }
    for (std::size_t c = 0; c < ds.n_features; ++c) {
        st.sd[c] = std::sqrt(st.sd[c] / std::max(count[c], 1.0));
        if (st.sd[c] < 1e-12) st.sd[c] = 1.0;
    }
    return st;
}

inline nn::SampleSet build_samples(const DatasetTensor& ds, const std::vector<std::size_t>& rows,
                                   const ChannelStats* stats) {
    nn::SampleSet s;
    s.x = Tensor({rows.size(), ds.n_frames, ds.n_features});
    if (!ds.mask.empty()) s.mask = Mask(rows.size(), ds.n_frames, 0);
    s.y.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t r = rows[i];
        s.y[i] = ds.labels[r];
        for (std::size_t f = 0; f < ds.n_frames; ++f) {
            const bool live = ds.mask.empty() || ds.mask[r * ds.n_frames + f];
            if (!ds.mask.empty()) s.mask.v[i * ds.n_frames + f] = live ? 1 : 0;
            for (std::size_t c = 0; c < ds.n_features; ++c) {
                double v = ds.at(r, f, c);
                if (live && stats) v = (v - stats->mean[c]) / stats->sd[c];
                if (!live) v = 0.0;
                s.x(i, f, c) = v;
            }
        }
    }
    return s;
}

inline std::pair<double, double> mean_std(const std::vector<double>& xs, bool population) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double s2 = 0.0;
    for (double x : xs) s2 += (x - m) * (x - m);
    const double denom = population ? static_cast<double>(xs.size())
                                    : std::max<double>(1.0, static_cast<double>(xs.size()) - 1.0);
    return {m, std::sqrt(s2 / denom)};
}

}  // namespace detail

// One fold per subject: train on everyone else (with the configured
// validation split inside), test on the held-out subject. Folds run on a
// small thread pool; every fold derives its own RNG stream from the subject
// id, so the schedule cannot change the numbers.
inline CvReport loso_cross_validate(const DatasetTensor& ds, const nn::ModelSpec& spec,
                                    const nn::TrainConfig& config, const LosoOptions& opt = {},
                                    std::vector<nn::TrainedModel>* fold_models = nullptr) {
    std::set<int> subject_set;
    for (const auto& m : ds.meta) subject_set.insert(m.subject_id);
    if (subject_set.size() < 2) throw ParamError("LOSO needs at least 2 subjects");
    const std::vector<int> subjects(subject_set.begin(), subject_set.end());

    CvReport report;
    report.task = ds.task;
    report.source = ds.source;
    report.arch = spec.arch;
    report.layout = ds.layout;
    report.seed = opt.seed;
    report.population_std = opt.population_std;
    report.folds.resize(subjects.size());
    if (fold_models) fold_models->resize(subjects.size());
    std::vector<std::uint8_t> fold_ok(subjects.size(), 0);

    auto run_fold = [&](std::size_t fi) {
        const int held_out = subjects[fi];
        std::vector<std::size_t> train_rows, test_rows;
        for (std::size_t i = 0; i < ds.n_trials; ++i)
            (ds.meta[i].subject_id == held_out ? test_rows : train_rows).push_back(i);
        if (test_rows.empty()) return;  // recorded as exclusion by the caller
        detail::ChannelStats stats;
        const detail::ChannelStats* stats_ptr = nullptr;
        if (opt.standardize) {
            stats = detail::fit_stats(ds, train_rows);
            stats_ptr = &stats;
        }
        const nn::SampleSet train_set = detail::build_samples(ds, train_rows, stats_ptr);
        const nn::SampleSet test_set = detail::build_samples(ds, test_rows, stats_ptr);
        nn::ModelSpec fold_spec = spec;
        fold_spec.seed = mix_seed(opt.seed, static_cast<std::uint64_t>(held_out) * 2 + 1);
        nn::TrainConfig fold_cfg = config;
        fold_cfg.seed = mix_seed(opt.seed, static_cast<std::uint64_t>(held_out) * 2);
        auto tr = nn::train(fold_spec, train_set, fold_cfg);
        nn::SequenceModel model = nn::restore(tr.model);
        const nn::SampleSet trained_on = nn::subset(train_set, tr.train_indices);
        FoldResult fr;
        fr.held_out_subject = held_out;
        fr.train_accuracy = nn::evaluate(model, trained_on);
        fr.test_accuracy = nn::evaluate(model, test_set);
        fr.stopped_epoch = tr.model.stopped_epoch;
        fr.n_test = test_rows.size();
        report.folds[fi] = fr;
        if (fold_models) (*fold_models)[fi] = std::move(tr.model);
        fold_ok[fi] = 1;
    };

    const int n_threads = std::max(1, opt.n_threads);
    if (n_threads == 1) {
        for (std::size_t fi = 0; fi < subjects.size(); ++fi) run_fold(fi);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        for (int w = 0; w < n_threads; ++w)
            workers.emplace_back([&]() {
                for (;;) {
                    const std::size_t fi = next.fetch_add(1);
                    if (fi >= subjects.size()) return;
                    run_fold(fi);
                }
            });
        for (auto& t : workers) t.join();
    }

    std::vector<FoldResult> kept;
    std::vector<nn::TrainedModel> kept_models;
    for (std::size_t fi = 0; fi < subjects.size(); ++fi) {
        if (fold_ok[fi]) {
            kept.push_back(report.folds[fi]);
            if (fold_models) kept_models.push_back(std::move((*fold_models)[fi]));
        } else {
            report.exclusions.emplace_back(subjects[fi], "no trials for subject");
        }
    }
    report.folds = std::move(kept);
    if (fold_models) *fold_models = std::move(kept_models);
    if (report.folds.empty()) throw ParamError("no usable folds");
    std::vector<double> train_acc, test_acc;
    for (const auto& f : report.folds) {
        train_acc.push_back(f.train_accuracy);
        test_acc.push_back(f.test_accuracy);
    }
    std::tie(report.train_mean, report.train_std) =
        detail::mean_std(train_acc, opt.population_std);
    std::tie(report.test_mean, report.test_std) = detail::mean_std(test_acc, opt.population_std);
    return report;
}

// Metadata-filtered weight-discrimination run (H2.1 / H2.2 style analyses).
inline CvReport subset_analysis(const DatasetTensor& ds, Subset filter,
                                const nn::ModelSpec& spec, const nn::TrainConfig& config,
                                const LosoOptions& opt = {}) {
    DatasetTensor filtered = filter_dataset(ds, [&](const TrialMeta& m) {
        switch (filter) {
            case Subset::None: return true;
            case Subset::ScaleToShelfOnly: return m.route == Route::ScaleToShelf;
            case Subset::LowCarefulnessOnly: return m.carefulness == CarefulnessClass::C1;
            case Subset::HighCarefulnessOnly: return m.carefulness == CarefulnessClass::C2;
        }
        return true;
    });
    if (filtered.n_trials == 0) throw ParamError("subset filter left no trials");
    relabel(filtered, Task::Weight);
    bool has_light = false, has_heavy = false;
    for (const auto& m : filtered.meta)
        (m.weight == WeightClass::W1 ? has_light : has_heavy) = true;
    if (!has_light || !has_heavy) throw ParamError("subset filter removed a weight class");
    return loso_cross_validate(filtered, spec, config, opt);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json cv_report_to_json(const CvReport& r) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.folds)
        folds.push_back({{"held_out_subject", f.held_out_subject},
                         {"train_accuracy", f.train_accuracy},
                         {"test_accuracy", f.test_accuracy},
                         {"stopped_epoch", f.stopped_epoch},
                         {"n_test", f.n_test}});
    nlohmann::json excl = nlohmann::json::array();
    for (const auto& [subject, reason] : r.exclusions)
        excl.push_back({{"subject", subject}, {"reason", reason}});
    return nlohmann::json{{"task", to_string(r.task)},
                          {"source", to_string(r.source)},
                          {"arch", nn::to_string(r.arch)},
                          {"layout", to_string(r.layout)},
                          {"seed", r.seed},
                          {"folds", std::move(folds)},
                          {"aggregate",
                           {{"train_mean", r.train_mean},
                            {"train_std", r.train_std},
                            {"test_mean", r.test_mean},
                            {"test_std", r.test_std},
                            {"population_std", r.population_std}}},
                          {"exclusions", std::move(excl)}};
}

inline CvReport cv_report_from_json(const nlohmann::json& j) {
    CvReport r;
    r.task = task_from_string(j.at("task").get<std::string>());
    r.source = source_from_string(j.at("source").get<std::string>());
    r.arch = nn::arch_from_string(j.at("arch").get<std::string>());
    r.layout = layout_from_string(j.at("layout").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& f : j.at("folds")) {
        FoldResult fr;
        fr.held_out_subject = f.at("held_out_subject").get<int>();
        fr.train_accuracy = f.at("train_accuracy").get<double>();
        fr.test_accuracy = f.at("test_accuracy").get<double>();
        fr.stopped_epoch = f.at("stopped_epoch").get<int>();
        fr.n_test = f.at("n_test").get<std::size_t>();
        r.folds.push_back(fr);
    }
    const auto& agg = j.at("aggregate");
    r.train_mean = agg.at("train_mean").get<double>();
    r.train_std = agg.at("train_std").get<double>();
    r.test_mean = agg.at("test_mean").get<double>();
    r.test_std = agg.at("test_std").get<double>();
    r.population_std = agg.at("population_std").get<bool>();
    for (const auto& e : j.at("exclusions"))
        r.exclusions.emplace_back(e.at("subject").get<int>(), e.at("reason").get<std::string>());
    return r;
}

// Binary dataset container: magic, layout/source, dims, per-trial label and
// subject tables, mask bytes, float64 payload.
inline void save_dataset(const std::filesystem::path& path, const DatasetTensor& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write dataset " + path.string());
    const char magic[8] = {'K', 'P', 'D', 'S', '0', '0', '0', '1'};
    os.write(magic, 8);
    auto w64 = [&](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
    w64(ds.layout == Layout::Resampled32 ? 0 : 1);
    w64(ds.source == Source::MoCap ? 0 : 1);
    w64(ds.task == Task::Carefulness ? 0 : 1);
    w64(ds.n_trials);
    w64(ds.n_frames);
    w64(ds.n_features);
    for (std::size_t i = 0; i < ds.n_trials; ++i) {
        const auto& m = ds.meta[i];
        w64(static_cast<std::uint64_t>(m.subject_id));
        w64(static_cast<std::uint64_t>(m.trial_index));
        const std::uint8_t bytes[4] = {
            static_cast<std::uint8_t>(m.weight == WeightClass::W2 ? 1 : 0),
            static_cast<std::uint8_t>(m.carefulness == CarefulnessClass::C2 ? 1 : 0),
            static_cast<std::uint8_t>(m.route == Route::ScaleToShelf ? 1 : 0),
            static_cast<std::uint8_t>(m.slot)};
        os.write(reinterpret_cast<const char*>(bytes), 4);
    }
    const std::uint64_t mask_bytes = ds.mask.size();
    w64(mask_bytes);
    if (mask_bytes)
        os.write(reinterpret_cast<const char*>(ds.mask.data()),
                 static_cast<std::streamsize>(mask_bytes));
    os.write(reinterpret_cast<const char*>(ds.data.data()),
             static_cast<std::streamsize>(ds.data.size() * sizeof(double)));
}

inline DatasetTensor load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read dataset " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8 || std::memcmp(magic, "KPDS0001", 8) != 0)
        throw ParseError(path.string() + ": not a dataset container");
    auto r64 = [&]() {
        std::uint64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    DatasetTensor ds;
    ds.layout = r64() == 0 ? Layout::Resampled32 : Layout::Padded132;
    ds.source = r64() == 0 ? Source::MoCap : Source::OpticalFlow;
    ds.task = r64() == 0 ? Task::Carefulness : Task::Weight;
    ds.n_trials = r64();
    ds.n_frames = r64();
    ds.n_features = r64();
    ds.meta.resize(ds.n_trials);
    ds.labels.resize(ds.n_trials);
    for (std::size_t i = 0; i < ds.n_trials; ++i) {
        TrialMeta m;
        m.subject_id = static_cast<int>(r64());
        m.trial_index = static_cast<int>(r64());
        std::uint8_t bytes[4];
        is.read(reinterpret_cast<char*>(bytes), 4);
        m.weight = bytes[0] ? WeightClass::W2 : WeightClass::W1;
        m.carefulness = bytes[1] ? CarefulnessClass::C2 : CarefulnessClass::C1;
        m.route = bytes[2] ? Route::ScaleToShelf : Route::ShelfToScale;
        m.slot = static_cast<ShelfSlot>(bytes[3]);
        ds.meta[i] = m;
        ds.labels[i] = class_index(m, ds.task);
    }
    const std::uint64_t mask_bytes = r64();
    ds.mask.resize(mask_bytes);
    if (mask_bytes)
        is.read(reinterpret_cast<char*>(ds.mask.data()),
                static_cast<std::streamsize>(mask_bytes));
    ds.data.resize(ds.n_trials * ds.n_frames * ds.n_features);
    is.read(reinterpret_cast<char*>(ds.data.data()),
            static_cast<std::streamsize>(ds.data.size() * sizeof(double)));
    if (!is) throw ParseError(path.string() + ": truncated dataset container");
    return ds;
}

}  // namespace kinpipe::experiment
