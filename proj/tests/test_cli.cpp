#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "kinpipe/cli.hpp"
#include "support/test_util.hpp"

using namespace kinpipe;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

int run_cli(std::initializer_list<std::string> args) {
    return cli::run(std::vector<std::string>(args));
}

std::size_t count_files(const fs::path& dir) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) ++n;
    return n;
}

}  // namespace

TEST(ConfigDefaults, ReproduceProtocolConstants) {
    const PipelineConfig c;
    EXPECT_EQ(c.position_filter_order, 2);
    EXPECT_DOUBLE_EQ(c.position_cutoff_hz, 10.0);
    EXPECT_EQ(c.vnorm_filter_order, 4);
    EXPECT_DOUBLE_EQ(c.vnorm_cutoff_hz, 5.0);
    EXPECT_EQ(c.flow_filter_order, 2);
    EXPECT_DOUBLE_EQ(c.flow_cutoff_hz, 4.0);
    EXPECT_DOUBLE_EQ(c.camera_rate_hz, 22.0);
    EXPECT_DOUBLE_EQ(c.seg.threshold_fraction, 0.05);
    EXPECT_EQ(c.class_cap, 235);
    EXPECT_EQ(c.resample_frames, 32);
    EXPECT_EQ(c.pad_frames, 132);
    EXPECT_DOUBLE_EQ(c.model.conv_l1, 0.001);
    EXPECT_DOUBLE_EQ(c.model.conv_l2, 0.002);
    EXPECT_DOUBLE_EQ(c.model.dense_l2, 0.001);
    EXPECT_DOUBLE_EQ(c.model.dropout_rate, 0.5);
    EXPECT_EQ(c.train.batch_size, 16);
    EXPECT_EQ(c.train.patience, 5);
    EXPECT_DOUBLE_EQ(c.train.validation_fraction, 0.20);
    EXPECT_DOUBLE_EQ(c.train.adam_lr, 0.001);
    EXPECT_DOUBLE_EQ(c.train.adam_beta1, 0.9);
    EXPECT_DOUBLE_EQ(c.train.adam_beta2, 0.999);
    EXPECT_DOUBLE_EQ(c.train.adam_eps, 1e-7);
    EXPECT_DOUBLE_EQ(c.synth.careful_duration_mean, 2.04);
    EXPECT_DOUBLE_EQ(c.synth.careful_duration_sd, 0.18);
    EXPECT_DOUBLE_EQ(c.synth.swift_duration_mean, 1.47);
    EXPECT_DOUBLE_EQ(c.synth.swift_duration_sd, 0.15);
    EXPECT_DOUBLE_EQ(c.synth.heavy_speed_multiplier, 0.92);
    EXPECT_EQ(c.synth.n_subjects, 15);
    EXPECT_EQ(c.synth.trials_per_subject, 64);
    // the two spec'd architectures exist with the published layer sizes
    const auto cnn = nn::build_cnn_lstm_dnn();
    EXPECT_EQ(cnn.lstm_units, 100);
    EXPECT_EQ(cnn.dense_units, 100);
    const auto masked = nn::build_masked_lstm_dnn();
    EXPECT_EQ(masked.lstm_units, 64);
    EXPECT_EQ(masked.dense_units, 32);
}

TEST(ConfigJson, RoundTrips) {
    PipelineConfig c;
    c.seed = 1234;
    c.task = Task::Weight;
    c.layout = Layout::Padded132;
    c.arch = nn::Arch::MaskedLstmDnn;
    c.subset = Subset::ScaleToShelfOnly;
    c.exclude_outliers = OutlierPolicy::Auto;
    c.synth.n_subjects = 3;
    c.seg.prominence_fraction = 0.2;
    const auto j = config_to_json(c);
    const PipelineConfig back = config_from_json(j);
    EXPECT_EQ(config_to_json(back).dump(), j.dump());
    EXPECT_EQ(back.task, Task::Weight);
    EXPECT_EQ(back.subset, Subset::ScaleToShelfOnly);
    EXPECT_EQ(back.synth.n_subjects, 3);
    EXPECT_DOUBLE_EQ(back.seg.prominence_fraction, 0.2);
}

TEST(CliSynth, WritesCohortAndManifest) {
    testutil::TempDir tmp("cli_synth");
    const std::string out = (tmp.path() / "out").string();
    ASSERT_EQ(run_cli({"synth", "--subjects", "2", "--trials", "8", "--seed", "7",
                       "--out", out}),
              0);
    EXPECT_EQ(count_files(tmp.path() / "out" / "trials"), 16u);
    EXPECT_EQ(count_files(tmp.path() / "out" / "flow"), 16u);
    EXPECT_TRUE(fs::exists(tmp.path() / "out" / "manifest.json"));
    const auto manifest = ingest::read_manifest(tmp.path() / "out" / "manifest.json");
    EXPECT_EQ(manifest.size(), 16u);
}

TEST(CliSynth, RerunIsByteIdentical) {
    testutil::TempDir tmp("cli_synth_det");
    const std::string out_a = (tmp.path() / "a").string();
    const std::string out_b = (tmp.path() / "b").string();
    ASSERT_EQ(run_cli({"synth", "--subjects", "2", "--trials", "4", "--seed", "11",
                       "--out", out_a}),
              0);
    ASSERT_EQ(run_cli({"synth", "--subjects", "2", "--trials", "4", "--seed", "11",
                       "--out", out_b}),
              0);
    EXPECT_EQ(slurp(tmp.path() / "a" / "manifest.json"), slurp(tmp.path() / "b" / "manifest.json"));
    EXPECT_EQ(slurp(tmp.path() / "a" / "trials" / "s01_t000.csv"),
              slurp(tmp.path() / "b" / "trials" / "s01_t000.csv"));
    EXPECT_EQ(slurp(tmp.path() / "a" / "flow" / "s02_t003.csv"),
              slurp(tmp.path() / "b" / "flow" / "s02_t003.csv"));
}

TEST(CliSynth, ZeroSubjectsIsConfigError) {
    testutil::TempDir tmp("cli_synth_bad");
    EXPECT_EQ(run_cli({"synth", "--subjects", "0", "--out", (tmp.path() / "o").string()}), 2);
}

TEST(CliPreprocess, ProducesFeaturesAndSurvivesCorruptTrial) {
    testutil::TempDir tmp("cli_pre");
    const std::string out = (tmp.path() / "out").string();
    ASSERT_EQ(run_cli({"synth", "--subjects", "2", "--trials", "6", "--seed", "3",
                       "--out", out}),
              0);
    // corrupt one trial file: the run must continue and name it in the index
    std::ofstream(tmp.path() / "out" / "trials" / "s01_t002.csv") << "garbage";
    ASSERT_EQ(run_cli({"preprocess", "--source", "mocap", "--out", out}), 0);
    nlohmann::json index;
    std::ifstream(tmp.path() / "out" / "features_mocap_index.json") >> index;
    ASSERT_EQ(index.size(), 12u);
    int ok = 0, failed = 0;
    for (const auto& rec : index) {
        if (rec.at("status") == "ok")
            ++ok;
        else
            ++failed;
    }
    EXPECT_EQ(failed, 1);
    EXPECT_EQ(ok, 11);
    EXPECT_TRUE(fs::exists(tmp.path() / "out" / "segmentation_mocap.csv"));
    // feature files exist for the ok entries
    EXPECT_EQ(count_files(tmp.path() / "out" / "features_mocap"), 11u);
}

TEST(CliPreprocess, FlowSourceSwitchesPath) {
    testutil::TempDir tmp("cli_pre_flow");
    const std::string out = (tmp.path() / "out").string();
    ASSERT_EQ(run_cli({"synth", "--subjects", "2", "--trials", "4", "--seed", "5",
                       "--out", out}),
              0);
    ASSERT_EQ(run_cli({"preprocess", "--source", "flow", "--out", out}), 0);
    EXPECT_TRUE(fs::exists(tmp.path() / "out" / "features_flow_index.json"));
    EXPECT_GE(count_files(tmp.path() / "out" / "features_flow"), 7u);
}

TEST(CliTrainEval, MissingIndexIsConfigError) {
    testutil::TempDir tmp("cli_te_missing");
    EXPECT_EQ(run_cli({"train-eval", "--out", (tmp.path() / "nothing").string()}), 2);
}

TEST(CliPipeline, EndToEndSmallCohort) {
    testutil::TempDir tmp("cli_e2e");
    const std::string out = (tmp.path() / "out").string();
    ASSERT_EQ(run_cli({"synth", "--subjects", "2", "--trials", "12", "--seed", "21",
                       "--out", out}),
              0);
    ASSERT_EQ(run_cli({"preprocess", "--source", "mocap", "--out", out}), 0);
    ASSERT_EQ(run_cli({"train-eval", "--source", "mocap", "--task", "carefulness",
                       "--layout", "resampled32", "--arch", "cnn-lstm-dnn", "--seed", "9",
                       "--max-epochs", "4", "--out", out}),
              0);
    const fs::path cv = tmp.path() / "out" / "cv_carefulness_mocap_cnn-lstm-dnn_resampled32.json";
    ASSERT_TRUE(fs::exists(cv));
    nlohmann::json j;
    std::ifstream(cv) >> j;
    EXPECT_EQ(j.at("folds").size(), 2u);
    EXPECT_TRUE(fs::exists(tmp.path() / "out" / "dataset_mocap_resampled32.kds"));
    EXPECT_TRUE(fs::exists(tmp.path() / "out" / "checkpoints"));
    // checkpoints load back as runnable models
    std::size_t n_ckpt = 0;
    for (const auto& e : fs::directory_iterator(tmp.path() / "out" / "checkpoints")) {
        const auto tm = nn::load_checkpoint(e.path());
        EXPECT_GT(tm.stopped_epoch, 0);
        ++n_ckpt;
    }
    EXPECT_EQ(n_ckpt, 2u);

    ASSERT_EQ(run_cli({"report", "--out", out}), 0);
    EXPECT_TRUE(fs::exists(tmp.path() / "out" / "report.txt"));
    const std::string text = slurp(tmp.path() / "out" / "report.txt");
    EXPECT_NE(text.find("carefulness"), std::string::npos);
    EXPECT_NE(text.find("cnn-lstm-dnn"), std::string::npos);
    ASSERT_EQ(run_cli({"report", "--format", "csv", "--out", out}), 0);
    const std::string csv = slurp(tmp.path() / "out" / "report.csv");
    EXPECT_NE(csv.find("task,arch,layout,source"), std::string::npos);
}

TEST(CliPipeline, SubsetAnalysisPath) {
    testutil::TempDir tmp("cli_subset");
    const std::string out = (tmp.path() / "out").string();
    ASSERT_EQ(run_cli({"synth", "--subjects", "2", "--trials", "16", "--seed", "41",
                       "--out", out}),
              0);
    ASSERT_EQ(run_cli({"preprocess", "--source", "mocap", "--out", out}), 0);
    ASSERT_EQ(run_cli({"train-eval", "--task", "weight", "--subset", "scale-to-shelf",
                       "--seed", "3", "--max-epochs", "2", "--out", out}),
              0);
    const fs::path cv = tmp.path() / "out" /
                        "cv_weight_mocap_cnn-lstm-dnn_resampled32_subset-scale-to-shelf.json";
    ASSERT_TRUE(fs::exists(cv));
    nlohmann::json j;
    std::ifstream(cv) >> j;
    EXPECT_EQ(j.at("task"), "weight");
    EXPECT_EQ(j.at("folds").size(), 2u);
}

TEST(CliPipeline, TrainEvalRerunIsByteIdentical) {
    testutil::TempDir tmp("cli_det");
    const std::string out = (tmp.path() / "out").string();
    ASSERT_EQ(run_cli({"synth", "--subjects", "2", "--trials", "8", "--seed", "31",
                       "--out", out}),
              0);
    ASSERT_EQ(run_cli({"preprocess", "--source", "mocap", "--out", out}), 0);
    const auto run_te = [&]() {
        return run_cli({"train-eval", "--source", "mocap", "--seed", "13", "--max-epochs",
                        "3", "--out", out});
    };
    ASSERT_EQ(run_te(), 0);
    const fs::path cv = tmp.path() / "out" / "cv_carefulness_mocap_cnn-lstm-dnn_resampled32.json";
    const std::string first = slurp(cv);
    ASSERT_EQ(run_te(), 0);
    EXPECT_EQ(slurp(cv), first);
}

TEST(CliConfigFile, FlagsOverrideConfig) {
    testutil::TempDir tmp("cli_cfg");
    PipelineConfig c;
    c.synth.n_subjects = 2;
    c.synth.trials_per_subject = 4;
    c.seed = 77;
    const fs::path cfg_path = tmp.path() / "config.json";
    std::ofstream(cfg_path) << config_to_json(c).dump(2);
    const std::string out = (tmp.path() / "out").string();
    // --trials overrides the config file value
    ASSERT_EQ(run_cli({"synth", "--config", cfg_path.string(), "--trials", "6", "--out", out}),
              0);
    const auto manifest = ingest::read_manifest(tmp.path() / "out" / "manifest.json");
    EXPECT_EQ(manifest.size(), 12u);  // 2 subjects x 6 trials
}

TEST(CliConfigFile, MissingConfigIsError) {
    EXPECT_EQ(run_cli({"synth", "--config", "/nonexistent/config.json", "--out", "/tmp/x"}), 2);
}
