#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "kinpipe/nn/train.hpp"
#include "kinpipe/rng.hpp"
#include "support/test_util.hpp"

using namespace kinpipe;
using namespace kinpipe::nn;

namespace {

// Trivially separable sequences: class 0 hovers at +level, class 1 at -level.
SampleSet separable_set(std::size_t n, std::size_t frames, double level, std::uint64_t seed,
                        bool with_mask = false) {
    Rng rng(seed);
    SampleSet s;
    s.x = Tensor({n, frames, 4});
    s.y.resize(n);
    if (with_mask) s.mask = Mask(n, frames, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 2);
        s.y[i] = cls;
        const std::size_t len = with_mask ? frames / 2 + rng.index(frames / 2) : frames;
        for (std::size_t f = 0; f < frames; ++f) {
            const bool live = f < len;
            if (with_mask) s.mask.set(i, f, live);
            for (std::size_t c = 0; c < 4; ++c)
                s.x(i, f, c) = live ? (cls == 0 ? level : -level) + rng.normal(0.0, 0.1) : 0.0;
        }
    }
    return s;
}

ModelSpec small_cnn(std::uint64_t seed) {
    ModelSpec spec = build_cnn_lstm_dnn(32, 4);
    spec.conv_filters = 8;
    spec.lstm_units = 12;
    spec.dense_units = 12;
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST(EarlyStopper, StopsAfterPatienceExceeded) {
    // strictly worsening validation loss from epoch 2 with patience 5:
    // epochs 2..6 burn the patience budget, epoch 7 exceeds it
    EarlyStopper stopper(5);
    int epoch = 0;
    bool stopped = false;
    for (double loss : {1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8}) {
        ++epoch;
        if (stopper.observe(loss)) {
            stopped = true;
            break;
        }
    }
    EXPECT_TRUE(stopped);
    EXPECT_EQ(epoch, 7);
}

TEST(EarlyStopper, ImprovementResetsCounter) {
    EarlyStopper stopper(2);
    EXPECT_FALSE(stopper.observe(1.0));
    EXPECT_FALSE(stopper.observe(1.2));
    EXPECT_FALSE(stopper.observe(1.3));
    EXPECT_FALSE(stopper.observe(0.9));  // new best
    EXPECT_FALSE(stopper.observe(1.0));
    EXPECT_FALSE(stopper.observe(1.1));
    EXPECT_TRUE(stopper.observe(1.2));
}

TEST(Evaluate, AccuracyArithmetic) {
    // hand-built scores via a model with a forced head are overkill; instead
    // check the argmax contract on a tiny trained-free model by matching
    // labels to whatever the model predicts
    ModelSpec spec = build_masked_lstm_dnn(8, 4);
    spec.lstm_units = 4;
    spec.dense_units = 4;
    spec.seed = 5;
    SequenceModel model(spec);
    Rng rng(6);
    SampleSet data;
    data.x = Tensor({10, 8, 4});
    for (double& v : data.x.data) v = rng.normal();
    data.y.assign(10, 0);
    const Tensor scores = model.forward(data.x, nullptr);
    std::vector<int> predicted(10);
    for (std::size_t i = 0; i < 10; ++i) predicted[i] = scores(i, 1) > scores(i, 0) ? 1 : 0;
    // agree on 7 of 10
    for (std::size_t i = 0; i < 10; ++i) data.y[i] = i < 7 ? predicted[i] : 1 - predicted[i];
    EXPECT_NEAR(evaluate(model, data), 0.7, 1e-12);
    for (std::size_t i = 0; i < 10; ++i) data.y[i] = predicted[i];
    EXPECT_DOUBLE_EQ(evaluate(model, data), 1.0);
    for (std::size_t i = 0; i < 10; ++i) data.y[i] = 1 - predicted[i];
    EXPECT_DOUBLE_EQ(evaluate(model, data), 0.0);
}

TEST(Train, OverfitsSeparableData) {
    const SampleSet data = separable_set(32, 32, 0.8, 11);
    TrainConfig cfg;
    cfg.seed = 3;
    const auto result = train(small_cnn(7), data, cfg);
    SequenceModel model = restore(result.model);
    const SampleSet trained_on = subset(data, result.train_indices);
    EXPECT_DOUBLE_EQ(evaluate(model, trained_on), 1.0);
    EXPECT_LE(result.model.stopped_epoch, cfg.max_epochs);
    EXPECT_EQ(result.model.history.size(),
              static_cast<std::size_t>(result.model.stopped_epoch));
}

TEST(Train, MaskedModelLearnsVariableLengths) {
    const SampleSet data = separable_set(32, 24, 0.8, 13, true);
    ModelSpec spec = build_masked_lstm_dnn(24, 4);
    spec.lstm_units = 8;
    spec.dense_units = 8;
    spec.seed = 17;
    TrainConfig cfg;
    cfg.seed = 19;
    const auto result = train(spec, data, cfg);
    SequenceModel model = restore(result.model);
    const SampleSet trained_on = subset(data, result.train_indices);
    EXPECT_GE(evaluate(model, trained_on), 0.95);
}

TEST(Train, DeterministicGivenSeed) {
    const SampleSet data = separable_set(24, 32, 0.6, 21);
    TrainConfig cfg;
    cfg.seed = 23;
    cfg.max_epochs = 6;
    const auto a = train(small_cnn(9), data, cfg);
    const auto b = train(small_cnn(9), data, cfg);
    ASSERT_EQ(a.model.parameters.size(), b.model.parameters.size());
    for (std::size_t i = 0; i < a.model.parameters.size(); ++i) {
        const auto& ta = a.model.parameters[i];
        const auto& tb = b.model.parameters[i];
        ASSERT_EQ(ta.shape, tb.shape);
        EXPECT_EQ(0, std::memcmp(ta.data.data(), tb.data.data(),
                                 ta.data.size() * sizeof(double)));
    }
    ASSERT_EQ(a.model.history.size(), b.model.history.size());
    for (std::size_t e = 0; e < a.model.history.size(); ++e) {
        EXPECT_EQ(a.model.history[e].train_loss, b.model.history[e].train_loss);
        EXPECT_EQ(a.model.history[e].val_loss, b.model.history[e].val_loss);
    }
}

TEST(Train, ValidationSplitIsTwentyPercent) {
    const SampleSet data = separable_set(40, 32, 0.6, 25);
    TrainConfig cfg;
    cfg.seed = 27;
    cfg.max_epochs = 1;
    const auto result = train(small_cnn(11), data, cfg);
    EXPECT_EQ(result.val_indices.size(), 8u);
    EXPECT_EQ(result.train_indices.size(), 32u);
    // disjoint cover
    std::vector<bool> seen(40, false);
    for (std::size_t i : result.train_indices) seen[i] = true;
    for (std::size_t i : result.val_indices) {
        EXPECT_FALSE(seen[i]);
        seen[i] = true;
    }
    for (bool b : seen) EXPECT_TRUE(b);
}

TEST(Train, RestoresBestValidationEpoch) {
    // train long enough that the last epoch is usually past the best one;
    // the restored parameters must reproduce the recorded best val loss
    const SampleSet data = separable_set(30, 32, 0.3, 29);
    TrainConfig cfg;
    cfg.seed = 31;
    cfg.max_epochs = 12;
    cfg.patience = 3;
    const auto result = train(small_cnn(13), data, cfg);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : result.model.history) best = std::min(best, e.val_loss);
    SequenceModel model = restore(result.model);
    // recompute the validation loss with the restored parameters
    const SampleSet val_set = subset(data, result.val_indices);
    double vloss = 0.0;
    Tensor y({val_set.size(), 2});
    for (std::size_t i = 0; i < val_set.size(); ++i)
        y(i, static_cast<std::size_t>(val_set.y[i])) = 1.0;
    const Tensor scores = model.forward(val_set.x, nullptr);
    for (std::size_t i = 0; i < val_set.size(); ++i) {
        double s = scores(i, 0) + scores(i, 1);
        for (std::size_t k = 0; k < 2; ++k)
            vloss -= y(i, k) * std::log(std::max(scores(i, k) / s, 1e-12));
    }
    vloss = vloss / static_cast<double>(val_set.size()) + model.regularization_loss();
    EXPECT_NEAR(vloss, best, 1e-9);
}

TEST(Train, RejectsSingleClassData) {
    SampleSet data = separable_set(16, 32, 0.5, 33);
    std::fill(data.y.begin(), data.y.end(), 0);
    TrainConfig cfg;
    EXPECT_THROW(train(small_cnn(15), data, cfg), ParamError);
}

TEST(Checkpoint, RoundTripAndEvaluateOnly) {
    testutil::TempDir tmp("ckpt");
    const SampleSet data = separable_set(24, 32, 0.8, 35);
    TrainConfig cfg;
    cfg.seed = 37;
    cfg.max_epochs = 4;
    const auto result = train(small_cnn(17), data, cfg);
    const auto path = tmp.path() / "model.kpnn";
    save_checkpoint(path, result.model);
    const TrainedModel loaded = load_checkpoint(path);
    EXPECT_EQ(loaded.stopped_epoch, result.model.stopped_epoch);
    ASSERT_EQ(loaded.parameters.size(), result.model.parameters.size());
    for (std::size_t i = 0; i < loaded.parameters.size(); ++i)
        EXPECT_EQ(loaded.parameters[i].data, result.model.parameters[i].data);
    ASSERT_EQ(loaded.history.size(), result.model.history.size());
    SequenceModel a = restore(result.model);
    SequenceModel b = restore(loaded);
    EXPECT_DOUBLE_EQ(evaluate(a, data), evaluate(b, data));
}

TEST(Checkpoint, RejectsGarbageFile) {
    testutil::TempDir tmp("ckptbad");
    const auto path = tmp.path() / "bad.kpnn";
    std::ofstream(path) << "not a checkpoint";
    EXPECT_THROW(load_checkpoint(path), ParseError);
}
