// Acceptance suite: one pass/fail line per criterion, exit code = failures.
// Quantitative checks run against independent oracles (closed forms, brute
// force scans, finite differences) or the seeded synthetic cohort.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "kinpipe/cli.hpp"
#include "kinpipe/experiment.hpp"
#include "kinpipe/pipeline.hpp"
#include "kinpipe/synth.hpp"
#include "../support/synthetic_frames.hpp"
#include "../support/test_util.hpp"

using namespace kinpipe;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
    std::string name;
    bool passed = true;
    std::string details;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            passed = false;
            if (!details.empty()) details += "; ";
            details += what;
        }
    }
    void note(const std::string& what) {
        if (!details.empty()) details += "; ";
        details += what;
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// shared cohort: the default seeded 15 x 64 synthetic experiment
// ---------------------------------------------------------------------------

struct Cohort {
    std::vector<experiment::ProcessedTrial> mocap, flow;
    int excluded = 0;
};

Cohort build_cohort(std::uint64_t seed) {
    synth::SynthConfig sc;
    sc.seed = seed;
    PipelineConfig pc;
    Cohort cohort;
    for (const auto& t : synth::generate_synthetic_trials(sc)) {
        try {
            cohort.mocap.push_back(pipeline::preprocess_mocap_trial(t.record, pc).trial);
        } catch (const Error&) {
            ++cohort.excluded;
        }
        try {
            cohort.flow.push_back(pipeline::preprocess_flow_trial(t.record, pc).trial);
        } catch (const Error&) {
            ++cohort.excluded;
        }
    }
    return cohort;
}

experiment::CvReport run_loso(const std::vector<experiment::ProcessedTrial>& trials,
                              nn::Arch arch, Layout layout, Task task, std::uint64_t seed) {
    const auto balanced = experiment::balance_classes(trials, 235, seed);
    const auto ds = experiment::assemble(balanced, layout, task);
    const nn::ModelSpec spec =
        arch == nn::Arch::CnnLstmDnn ? nn::build_cnn_lstm_dnn() : nn::build_masked_lstm_dnn();
    nn::TrainConfig tc;
    experiment::LosoOptions opt;
    opt.seed = seed;
    opt.n_threads = 2;
    return experiment::loso_cross_validate(ds, spec, tc, opt);
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

Criterion gradient_correctness() {
    Criterion c{"gradient-correctness"};
    const auto t0 = Clock::now();
    Rng rng(1);
    auto fd_check = [&](nn::SequenceModel& model, const Tensor& x, const Mask* mask,
                        const Tensor& y) {
        const double eps = 1e-5;
        model.loss_and_gradients(x, mask, y, false, nullptr);
        std::vector<Tensor> analytic;
        for (auto& p : model.params()) analytic.push_back(*p.grad);
        double worst = 0.0;
        auto params = model.params();
        for (std::size_t pi = 0; pi < params.size(); ++pi)
            for (std::size_t i = 0; i < params[pi].value->numel(); ++i) {
                double& w = params[pi].value->data[i];
                const double keep = w;
                w = keep + eps;
                const double lp = model.loss_and_gradients(x, mask, y, false, nullptr);
                w = keep - eps;
                const double lm = model.loss_and_gradients(x, mask, y, false, nullptr);
                w = keep;
                const double numeric = (lp - lm) / (2.0 * eps);
                const double a = analytic[pi].data[i];
                worst = std::max(worst, std::fabs(a - numeric) /
                                            std::max({std::fabs(a), std::fabs(numeric), 1e-8}));
            }
        return worst;
    };
    // conv + pool + lstm + dense + regularizers + cross-entropy
    nn::ModelSpec cnn;
    cnn.arch = nn::Arch::CnnLstmDnn;
    cnn.n_frames = 8;
    cnn.n_subsequences = 2;
    cnn.conv_kernel = 2;
    cnn.conv_filters = 3;
    cnn.lstm_units = 5;
    cnn.dense_units = 6;
    cnn.seed = 11;
    nn::SequenceModel cnn_model(cnn);
    Tensor x({6, 8, 4});
    for (double& v : x.data) v = rng.normal();
    Tensor y({6, 2});
    for (std::size_t i = 0; i < 6; ++i) y(i, i % 2) = 1.0;
    const double worst_cnn = fd_check(cnn_model, x, nullptr, y);
    c.require(worst_cnn < 1e-4, "cnn stack max rel err " + std::to_string(worst_cnn));

    // lstm with masking (dropout off in inference-mode checks)
    nn::ModelSpec masked;
    masked.arch = nn::Arch::MaskedLstmDnn;
    masked.n_frames = 8;
    masked.lstm_units = 5;
    masked.dense_units = 4;
    masked.seed = 13;
    nn::SequenceModel masked_model(masked);
    Tensor xm({6, 8, 4});
    for (double& v : xm.data) v = rng.normal();
    Mask mask(6, 8, 0);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t t = 0; t < 1 + rng.index(8); ++t) mask.set(i, t, true);
    const double worst_masked = fd_check(masked_model, xm, &mask, y);
    c.require(worst_masked < 1e-4, "masked stack max rel err " + std::to_string(worst_masked));

    const double elapsed = seconds_since(t0);
    c.require(elapsed < 60.0, "runtime " + std::to_string(elapsed) + " s");
    c.note("max rel err " + std::to_string(std::max(worst_cnn, worst_masked)) + ", " +
           std::to_string(elapsed) + " s");
    return c;
}

Criterion filter_response() {
    Criterion c{"filter-response"};
    const double lo = std::pow(10.0, -3.5 / 20.0);  // -3 dB +/- 0.5 dB band
    const double hi = std::pow(10.0, -2.5 / 20.0);
    for (double rate : {100.0, 22.0})
        for (int order : {2, 4})
            for (double fc : {10.0, 5.0, 4.0}) {
                if (fc >= rate / 2.0) continue;
                const auto sine = testutil::make_sine(rate, fc, 8.0);
                const auto filtered = signal::butterworth_single_pass(sine, order, fc);
                const double amp = testutil::measure_amplitude(filtered, fc, 4.0, 8.0);
                std::ostringstream what;
                what << "order " << order << " fc " << fc << " rate " << rate << ": " << amp;
                c.require(amp > lo && amp < hi, what.str());
            }
    return c;
}

Criterion kinematic_oracle() {
    Criterion c{"kinematic-oracle"};
    const double r = 100.0, omega = 2.2, rate = 22.0;
    signal::UniformSeries pos(rate, 3, 60);
    for (std::size_t k = 0; k < 60; ++k) {
        pos.at(k, 0) = r * std::cos(omega * k / rate);
        pos.at(k, 1) = r * std::sin(omega * k / rate);
    }
    const auto ks = features::extract_features(pos, Source::MoCap);
    for (std::size_t k = 3; k + 3 < ks.frames(); ++k) {
        c.require(std::fabs(ks.vcra.at(k, features::kC) - 0.01) < 0.0002, "circle C off");
        c.require(std::fabs(ks.vcra.at(k, features::kR) - 100.0) < 2.0, "circle R off");
        c.require(std::fabs(ks.vcra.at(k, features::kA) - 2.2) < 0.044, "circle A off");
    }
    signal::UniformSeries line(rate, 3, 20);
    for (std::size_t k = 0; k < 20; ++k) line.at(k, 0) = 10.0 * k;
    const auto lf = features::extract_features(line, Source::MoCap);
    for (std::size_t k = 0; k < 20; ++k) {
        c.require(lf.vcra.at(k, features::kC) == 0.0, "line C nonzero");
        c.require(lf.vcra.at(k, features::kR) == 1e6, "line R not clamped");
    }
    return c;
}

Criterion segmentation_oracle() {
    Criterion c{"segmentation-oracle"};
    Rng rng(99);
    int checked = 0;
    for (int rep = 0; rep < 200; ++rep) {
        struct Bump {
            double a, t0, s;
        };
        const std::vector<Bump> bumps = {
            {rng.uniform(0.6, 1.4), rng.uniform(0.4, 0.7), rng.uniform(0.07, 0.13)},
            {rng.uniform(0.5, 1.2), rng.uniform(1.4, 1.8), rng.uniform(0.08, 0.16)},
            {rng.uniform(0.6, 1.3), rng.uniform(2.5, 2.9), rng.uniform(0.07, 0.13)}};
        const double rate = 100.0;
        const std::size_t n = static_cast<std::size_t>(3.4 * rate) + 1;
        signal::UniformSeries s(rate, 1, n);
        for (std::size_t k = 0; k < n; ++k) {
            double v = 0.0;
            for (const auto& b : bumps) {
                const double d = (k / rate - b.t0) / b.s;
                v += b.a * std::exp(-0.5 * d * d);
            }
            s.at(k, 0) = v;
        }
        segment::PhaseSegmentation seg;
        try {
            seg = segment::segment_transport(s);
        } catch (const SegmentationError&) {
            continue;
        }
        ++checked;
        // brute-force scan around the known bump centers
        auto argmax_near = [&](double center) {
            std::size_t lo = static_cast<std::size_t>(std::max(0.0, (center - 0.4) * rate));
            std::size_t hi = std::min(n - 1, static_cast<std::size_t>((center + 0.4) * rate));
            std::size_t best = lo;
            for (std::size_t i = lo; i <= hi; ++i)
                if (s.at(i, 0) > s.at(best, 0)) best = i;
            return best;
        };
        const std::size_t p1 = argmax_near(bumps[0].t0);
        const std::size_t p2 = argmax_near(bumps[1].t0);
        const std::size_t p3 = argmax_near(bumps[2].t0);
        auto argmin_between = [&](std::size_t a, std::size_t b) {
            std::size_t best = a + 1;
            for (std::size_t i = a + 1; i < b; ++i)
                if (s.at(i, 0) < s.at(best, 0)) best = i;
            return best;
        };
        const std::size_t v12 = argmin_between(p1, p2);
        const std::size_t v23 = argmin_between(p2, p3);
        const double thr = 0.05 * s.at(p2, 0);
        std::size_t lo = p2, hi = p2;
        while (lo > v12 && s.at(lo - 1, 0) >= thr) --lo;
        while (hi < v23 && s.at(hi + 1, 0) >= thr) ++hi;
        const auto diff = [](std::size_t a, std::size_t b) {
            return a > b ? a - b : b - a;
        };
        c.require(diff(seg.transport.begin, lo) <= 1 && diff(seg.transport.end, hi) <= 1,
                  "rep " + std::to_string(rep) + " range mismatch");
        // amplitude scaling invariance
        for (double kscale : {0.1, 1.0, 10.0}) {
            signal::UniformSeries scaled = s;
            for (double& v : scaled.data) v *= kscale;
            const auto seg2 = segment::segment_transport(scaled);
            c.require(seg2.transport.begin == seg.transport.begin &&
                          seg2.transport.end == seg.transport.end,
                      "rep " + std::to_string(rep) + " amplitude variance at k=" +
                          std::to_string(kscale));
        }
    }
    c.require(checked >= 150, "only " + std::to_string(checked) + " profiles qualified");
    c.note(std::to_string(checked) + " profiles matched the brute-force scan");
    return c;
}

Criterion masking_invariance() {
    Criterion c{"masking-invariance"};
    nn::SequenceModel model(nn::build_masked_lstm_dnn());
    Rng rng(7);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t len = 10 + rng.index(123);
        Tensor x_short({1, len, 4});
        for (double& v : x_short.data) v = rng.normal();
        Mask m_short(1, len, 1);
        const Tensor out_short = model.forward(x_short, &m_short);
        Tensor x_pad({1, 132, 4});
        for (std::size_t t = 0; t < len; ++t)
            for (std::size_t ch = 0; ch < 4; ++ch) x_pad(0, t, ch) = x_short(0, t, ch);
        Mask m_pad(1, 132, 0);
        for (std::size_t t = 0; t < len; ++t) m_pad.set(0, t, true);
        const Tensor out_pad = model.forward(x_pad, &m_pad);
        worst = std::max({worst, std::fabs(out_short(0, 0) - out_pad(0, 0)),
                          std::fabs(out_short(0, 1) - out_pad(0, 1))});
    }
    c.require(worst <= 1e-12, "max discrepancy " + std::to_string(worst));
    c.note("100 lengths, max discrepancy " + std::to_string(worst));
    return c;
}

Criterion dataset_shapes(const Cohort& cohort) {
    Criterion c{"dataset-shapes"};
    const auto balanced = experiment::balance_classes(cohort.mocap, 235, 7);
    std::map<GlassCode, std::size_t> counts;
    for (const auto& t : balanced) counts[t.meta.glass_code()]++;
    c.require(counts.size() == 4, "class count");
    for (const auto& [code, nf] : counts)
        c.require(nf == 235, to_string(code) + " count " + std::to_string(nf));
    const auto r32 = experiment::assemble(balanced, Layout::Resampled32, Task::Carefulness);
    c.require(r32.n_trials == 940 && r32.n_frames == 32 && r32.n_features == 4,
              "resampled tensor " + std::to_string(r32.n_trials) + "x" +
                  std::to_string(r32.n_frames) + "x" + std::to_string(r32.n_features));
    const auto p132 = experiment::assemble(balanced, Layout::Padded132, Task::Carefulness);
    c.require(p132.n_trials == 940 && p132.n_frames == 132 && p132.n_features == 4,
              "padded tensor " + std::to_string(p132.n_trials) + "x" +
                  std::to_string(p132.n_frames) + "x" + std::to_string(p132.n_features));
    c.note("940x32x4 and 940x132x4, four classes at 235");
    return c;
}

Criterion carefulness_separability(const Cohort& cohort, double generation_s,
                                   std::map<std::string, experiment::CvReport>& out) {
    Criterion c{"carefulness-separability"};
    const auto t0 = Clock::now();
    struct Combo {
        const char* name;
        const std::vector<experiment::ProcessedTrial>* trials;
        nn::Arch arch;
        Layout layout;
    };
    const std::vector<Combo> combos = {
        {"cnn-lstm-dnn/mocap", &cohort.mocap, nn::Arch::CnnLstmDnn, Layout::Resampled32},
        {"cnn-lstm-dnn/flow", &cohort.flow, nn::Arch::CnnLstmDnn, Layout::Resampled32},
        {"masked-lstm-dnn/mocap", &cohort.mocap, nn::Arch::MaskedLstmDnn, Layout::Padded132},
        {"masked-lstm-dnn/flow", &cohort.flow, nn::Arch::MaskedLstmDnn, Layout::Padded132},
    };
    std::ostringstream summary;
    for (const auto& combo : combos) {
        const auto report = run_loso(*combo.trials, combo.arch, combo.layout,
                                     Task::Carefulness, 7);
        out[std::string("carefulness/") + combo.name] = report;
        summary << combo.name << " " << std::fixed << std::setprecision(1)
                << 100.0 * report.test_mean << "% ";
        c.require(report.test_mean >= 0.90,
                  std::string(combo.name) + " test accuracy " +
                      std::to_string(report.test_mean));
        c.require(report.folds.size() == 15,
                  std::string(combo.name) + " folds " + std::to_string(report.folds.size()));
    }
    const double elapsed = seconds_since(t0) + generation_s;
    c.require(elapsed < 15.0 * 60.0, "runtime " + std::to_string(elapsed) + " s");
    summary << "| " << std::setprecision(0) << elapsed << " s end to end (2 fold workers)";
    c.note(summary.str());
    return c;
}

Criterion weight_difficulty(const Cohort& cohort,
                            const std::map<std::string, experiment::CvReport>& care) {
    Criterion c{"weight-difficulty"};
    std::ostringstream summary;
    const auto cnn = run_loso(cohort.mocap, nn::Arch::CnnLstmDnn, Layout::Resampled32,
                              Task::Weight, 7);
    const auto masked = run_loso(cohort.mocap, nn::Arch::MaskedLstmDnn, Layout::Padded132,
                                 Task::Weight, 7);
    const double care_cnn = care.at("carefulness/cnn-lstm-dnn/mocap").test_mean;
    const double care_masked = care.at("carefulness/masked-lstm-dnn/mocap").test_mean;
    c.require(cnn.test_mean < care_cnn, "cnn weight not below carefulness");
    c.require(masked.test_mean < care_masked, "masked weight not below carefulness");
    summary << std::fixed << std::setprecision(1) << "weight cnn " << 100.0 * cnn.test_mean
            << "% vs carefulness " << 100.0 * care_cnn << "%; weight masked "
            << 100.0 * masked.test_mean << "% vs carefulness " << 100.0 * care_masked << "%";
    c.note(summary.str());
    return c;
}

Criterion statistics() {
    Criterion c{"statistics"};
    const auto kw = experiment::kruskal_wallis({{1.0, 2.0, 3.0}, {10.0, 11.0, 12.0}});
    c.require(std::fabs(kw.H - 3.857) <= 0.001, "H " + std::to_string(kw.H));
    c.require(std::fabs(kw.p - 0.0495) <= 0.0015, "p " + std::to_string(kw.p));
    // 15-subject cohort, 480 non-careful durations, one slow subject
    synth::SynthConfig sc;
    sc.n_subjects = 15;
    sc.trials_per_subject = 64;
    sc.seed = 101;
    sc.subject_duration_shift.assign(15, 0.0);
    sc.subject_duration_shift[7] = 0.5;
    std::vector<experiment::ProcessedTrial> trials;
    std::size_t n_swift = 0;
    for (const auto& t : synth::generate_synthetic_trials(sc)) {
        experiment::ProcessedTrial p;
        p.meta = t.record.meta;
        p.transport_duration_s = t.transport_duration_s;
        if (p.meta.carefulness == CarefulnessClass::C1) ++n_swift;
        trials.push_back(std::move(p));
    }
    const auto rep = experiment::outlier_subject_report(trials);
    c.require(n_swift == 480, "N " + std::to_string(n_swift));
    c.require(rep.kw.df == 14, "df " + std::to_string(rep.kw.df));
    c.require(rep.kw.p < 0.01, "p " + std::to_string(rep.kw.p));
    bool flagged8 = false;
    for (int s : rep.flagged) flagged8 |= (s == 8);
    c.require(flagged8, "slow subject not flagged");
    std::ostringstream note;
    note << "H2=" << kw.H << ", cohort chi2(14) H=" << rep.kw.H << " p=" << rep.kw.p;
    c.note(note.str());
    return c;
}

Criterion determinism() {
    Criterion c{"determinism"};
    testutil::TempDir tmp("acceptance_det");
    auto run_all = [&](const std::string& out) {
        int rc = cli::run({"synth", "--subjects", "4", "--trials", "16", "--seed", "21",
                           "--out", out});
        rc |= cli::run({"preprocess", "--source", "mocap", "--out", out});
        rc |= cli::run({"train-eval", "--source", "mocap", "--task", "carefulness",
                        "--layout", "resampled32", "--arch", "cnn-lstm-dnn", "--seed", "21",
                        "--out", out});
        return rc;
    };
    const std::string out_a = (tmp.path() / "a").string();
    const std::string out_b = (tmp.path() / "b").string();
    c.require(run_all(out_a) == 0, "first pipeline run failed");
    c.require(run_all(out_b) == 0, "second pipeline run failed");
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream is(p, std::ios::binary);
        std::ostringstream os;
        os << is.rdbuf();
        return os.str();
    };
    const std::string cv = "cv_carefulness_mocap_cnn-lstm-dnn_resampled32.json";
    const std::string a = slurp(tmp.path() / "a" / cv);
    const std::string b = slurp(tmp.path() / "b" / cv);
    c.require(!a.empty(), "missing CvReport");
    c.require(a == b, "CvReport JSON differs between identically seeded runs");
    c.note("CvReport byte-identical over synth -> preprocess -> train-eval");
    return c;
}

Criterion flow_oracle() {
    Criterion c{"flow-oracle"};
    // translated textures recover known shifts within +/- 0.5 px
    const std::vector<std::pair<double, double>> shifts = {{3.0, 0.0}, {-2.0, 1.0}, {1.5, -2.5}};
    int idx = 0;
    for (const auto& [dx, dy] : shifts) {
        testutil::Texture tex(40 + static_cast<std::uint64_t>(idx++));
        const auto a = testutil::textured_frame(tex, 160, 120, 0.0, 0.0);
        const auto b = testutil::textured_frame(tex, 160, 120, dx, dy);
        const auto field = flow::dense_flow(a, b);
        const auto st = testutil::field_stats(field, 12, 12, 148, 108);
        std::ostringstream what;
        what << "shift (" << dx << "," << dy << ") got (" << st.mean_u << "," << st.mean_v
             << ")";
        c.require(std::fabs(st.mean_u - dx) <= 0.5 && std::fabs(st.mean_v - dy) <= 0.5,
                  what.str());
    }
    // static scenes yield zero descriptors
    testutil::Texture tex(47);
    flow::FrameSequence seq;
    seq.width = 120;
    seq.height = 90;
    seq.rate = 22.0;
    for (int i = 0; i < 6; ++i)
        seq.frames.push_back(testutil::textured_frame(tex, 120, 90, 0.0, 0.0));
    const auto fs = flow::flow_descriptor_series(seq);
    for (const auto& s : fs.samples)
        c.require(std::fabs(s[0]) < 1e-6 && std::fabs(s[1]) < 1e-6, "static scene moved");
    return c;
}

}  // namespace

int main() {
    std::vector<Criterion> results;
    const auto t_start = Clock::now();

    results.push_back(gradient_correctness());
    results.push_back(filter_response());
    results.push_back(kinematic_oracle());
    results.push_back(segmentation_oracle());
    results.push_back(masking_invariance());

    const auto t_cohort = Clock::now();
    const Cohort cohort = build_cohort(7);
    const double generation_s = seconds_since(t_cohort);

    results.push_back(dataset_shapes(cohort));
    std::map<std::string, experiment::CvReport> care_reports;
    results.push_back(carefulness_separability(cohort, generation_s, care_reports));
    results.push_back(weight_difficulty(cohort, care_reports));
    results.push_back(statistics());
    results.push_back(determinism());
    results.push_back(flow_oracle());

    int failures = 0;
    for (const auto& c : results) {
        if (!c.passed) ++failures;
        std::printf("[%s] %s%s%s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                    c.details.empty() ? "" : ": ", c.details.c_str());
    }
    std::printf("%d/%zu criteria passed in %.0f s\n", static_cast<int>(results.size()) - failures,
                results.size(), seconds_since(t_start));
    return failures;
}
