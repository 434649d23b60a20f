#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinpipe/common.hpp"
#include "kinpipe/nn/model.hpp"
#include "kinpipe/rng.hpp"

namespace kinpipe::nn {

struct TrainConfig {
    int batch_size = 16;
    int max_epochs = 50;
    int patience = 5;  // early-stopping epochs without validation improvement
    double validation_fraction = 0.20;
    bool stratified_validation = false;
    double adam_lr = 0.001;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-7;
    std::uint64_t seed = 0;
};

// Labeled sequence set: x (N, T, F), optional per-frame mask, class index per
// trial.
struct SampleSet {
    Tensor x;
    Mask mask;  // empty when the layout is fixed-length
    std::vector<int> y;

    std::size_t size() const { return y.size(); }
    bool has_mask() const { return !mask.empty(); }
};

inline SampleSet subset(const SampleSet& s, const std::vector<std::size_t>& idx) {
    const std::size_t T = s.x.dim(1), F = s.x.dim(2);
    SampleSet out;
    out.x = Tensor({idx.size(), T, F});
    out.y.resize(idx.size());
    if (s.has_mask()) out.mask = Mask(idx.size(), T, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::memcpy(&out.x(i, 0, 0), &s.x(idx[i], 0, 0), T * F * sizeof(double));
        out.y[i] = s.y[idx[i]];
        if (s.has_mask())
            std::memcpy(&out.mask.v[i * T], &s.mask.v[idx[i] * T], T);
    }
    return out;
}

struct EpochStats {
    double train_loss = 0.0, train_accuracy = 0.0;
    double val_loss = 0.0, val_accuracy = 0.0;
};

struct TrainedModel {
    ModelSpec spec;
    std::vector<Tensor> parameters;  // best-validation snapshot
    std::vector<EpochStats> history;
    int stopped_epoch = 0;
};

// Stop counter: an epoch improves when its validation loss is strictly lower
// than the best seen; training stops once `patience` is exceeded.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    // Returns true when training should stop after this epoch.
    bool observe(double val_loss) {
        if (val_loss < best_) {
            best_ = val_loss;
            wait_ = 0;
            improved_ = true;
        } else {
            ++wait_;
            improved_ = false;
        }
        return wait_ > patience_;
    }

    bool improved() const { return improved_; }
    double best() const { return best_; }

private:
    int patience_;
    int wait_ = 0;
    bool improved_ = false;
    double best_ = std::numeric_limits<double>::infinity();
};

class Adam {
public:
    Adam(double lr, double b1, double b2, double eps)
        : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

    void step(std::vector<ParamRef>& params) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p.value->shape);
                v_.emplace_back(p.value->shape);
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, t_);
        const double bc2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            double* w = params[pi].value->data.data();
            const double* g = params[pi].grad->data.data();
            double* m = m_[pi].data.data();
            double* v = v_[pi].data.data();
            const std::size_t n = params[pi].value->numel();
            for (std::size_t i = 0; i < n; ++i) {
                m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
                v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    double lr_, b1_, b2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

namespace detail {

inline Tensor one_hot(const std::vector<int>& y, const std::vector<std::size_t>& idx,
                      std::size_t n_classes) {
    Tensor out({idx.size(), n_classes});
    for (std::size_t i = 0; i < idx.size(); ++i) out(i, static_cast<std::size_t>(y[idx[i]])) = 1.0;
    return out;
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

struct BatchView {
    Tensor x;
    Mask mask;
    Tensor y;
};

inline BatchView gather(const SampleSet& data, const std::vector<std::size_t>& idx,
                        std::size_t n_classes) {
    BatchView bv;
    const std::size_t T = data.x.dim(1), F = data.x.dim(2);
    bv.x = Tensor({idx.size(), T, F});
    if (data.has_mask()) bv.mask = Mask(idx.size(), T, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::memcpy(&bv.x(i, 0, 0), &data.x(idx[i], 0, 0), T * F * sizeof(double));
        if (data.has_mask()) std::memcpy(&bv.mask.v[i * T], &data.mask.v[idx[i] * T], T);
    }
    bv.y = one_hot(data.y, idx, n_classes);
    return bv;
}

}  // namespace detail

// Fraction of argmax-correct predictions; ties resolve toward class 0.
inline double evaluate(SequenceModel& model, const SampleSet& data, int batch_size = 64) {
    if (data.size() == 0) return 0.0;
    std::size_t correct = 0;
    const std::size_t n_classes = static_cast<std::size_t>(model.spec().n_classes);
    auto all = detail::iota_indices(data.size());
    for (std::size_t start = 0; start < all.size();
         start += static_cast<std::size_t>(batch_size)) {
        const std::size_t stop = std::min(all.size(), start + static_cast<std::size_t>(batch_size));
        const std::vector<std::size_t> idx(all.begin() + static_cast<std::ptrdiff_t>(start),
                                           all.begin() + static_cast<std::ptrdiff_t>(stop));
        auto bv = detail::gather(data, idx, n_classes);
        const Tensor scores =
            model.forward(bv.x, data.has_mask() ? &bv.mask : nullptr, false, nullptr);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::size_t arg = 0;
            for (std::size_t k = 1; k < n_classes; ++k)
                if (scores(i, k) > scores(i, arg)) arg = k;
            if (static_cast<int>(arg) == data.y[idx[i]]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

struct TrainResult {
    TrainedModel model;
    std::vector<std::size_t> train_indices;  // the 80% actually trained on
    std::vector<std::size_t> val_indices;
};

// Mini-batch ADAM with a seeded shuffled validation split (last 20% of the
// shuffled trials by default), per-epoch history and best-validation restore.
inline TrainResult train(const ModelSpec& spec, const SampleSet& data, const TrainConfig& cfg) {
    if (data.size() < 2) throw ParamError("training set too small");
    {
        bool seen[2] = {false, false};
        for (int y : data.y)
            if (y == 0 || y == 1) seen[y] = true;
        if (!seen[0] || !seen[1]) throw ParamError("training set must contain both classes");
    }
    Rng rng(mix_seed(cfg.seed, 0x7ea11));
    Rng dropout_rng(mix_seed(cfg.seed, 0xd409));

    auto order = detail::iota_indices(data.size());
    rng.shuffle(order);
    std::size_t n_val = static_cast<std::size_t>(
        std::lround(cfg.validation_fraction * static_cast<double>(data.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
    std::vector<std::size_t> val_idx, train_idx;
    if (cfg.stratified_validation) {
        // proportional per-class tail split
        std::vector<std::vector<std::size_t>> per_class(2);
        for (std::size_t i : order) per_class[static_cast<std::size_t>(data.y[i])].push_back(i);
        for (auto& cls : per_class) {
            const std::size_t nv = std::max<std::size_t>(
                1, static_cast<std::size_t>(
                       std::lround(cfg.validation_fraction * static_cast<double>(cls.size()))));
            for (std::size_t i = 0; i < cls.size(); ++i)
                (i + nv >= cls.size() ? val_idx : train_idx).push_back(cls[i]);
        }
    } else {
        train_idx.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
        val_idx.assign(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
    }

    const std::size_t n_classes = static_cast<std::size_t>(spec.n_classes);
    SequenceModel model(spec);
    auto params = model.params();
    Adam adam(cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    EarlyStopper stopper(cfg.patience);

    const SampleSet val_set = subset(data, val_idx);
    auto snapshot = [&]() {
        std::vector<Tensor> out;
        out.reserve(params.size());
        for (const auto& p : params) out.push_back(*p.value);
        return out;
    };
    std::vector<Tensor> best_params = snapshot();

    TrainedModel tm;
    tm.spec = spec;
    int epoch = 0;
    for (epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(train_idx);
        double loss_sum = 0.0;
        std::size_t n_batches = 0, n_correct = 0;
        for (std::size_t start = 0; start < train_idx.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(train_idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::vector<std::size_t> bidx(
                train_idx.begin() + static_cast<std::ptrdiff_t>(start),
                train_idx.begin() + static_cast<std::ptrdiff_t>(stop));
            auto bv = detail::gather(data, bidx, n_classes);
            const double loss = model.loss_and_gradients(
                bv.x, data.has_mask() ? &bv.mask : nullptr, bv.y, true, &dropout_rng);
            // running accuracy over the training-mode scores, as Keras logs it
            const Tensor& scores = model.last_scores();
            for (std::size_t i = 0; i < bidx.size(); ++i) {
                std::size_t arg = 0;
                for (std::size_t k = 1; k < n_classes; ++k)
                    if (scores(i, k) > scores(i, arg)) arg = k;
                if (static_cast<int>(arg) == data.y[bidx[i]]) ++n_correct;
            }
            adam.step(params);
            loss_sum += loss;
            ++n_batches;
        }
        EpochStats es;
        es.train_loss = loss_sum / static_cast<double>(n_batches);
        es.train_accuracy = static_cast<double>(n_correct) /
                            static_cast<double>(train_idx.size());
        // validation: one inference pass gives both the loss (cross-entropy
        // plus the current regularization penalty, mirroring the training
        // objective) and the accuracy
        {
            double vloss = 0.0;
            std::size_t v_correct = 0;
            auto all = detail::iota_indices(val_set.size());
            auto bv = detail::gather(val_set, all, n_classes);
            const Tensor scores =
                model.forward(bv.x, val_set.has_mask() ? &bv.mask : nullptr, false, nullptr);
            for (std::size_t i = 0; i < val_set.size(); ++i) {
                double s = 0.0;
                for (std::size_t k = 0; k < n_classes; ++k) s += scores(i, k);
                std::size_t arg = 0;
                for (std::size_t k = 0; k < n_classes; ++k) {
                    const double p = std::max(scores(i, k) / std::max(s, 1e-12), 1e-12);
                    vloss -= bv.y(i, k) * std::log(p);
                    if (scores(i, k) > scores(i, arg)) arg = k;
                }
                if (static_cast<int>(arg) == val_set.y[i]) ++v_correct;
            }
            es.val_loss = vloss / static_cast<double>(val_set.size()) + model.regularization_loss();
            es.val_accuracy =
                static_cast<double>(v_correct) / static_cast<double>(val_set.size());
        }
        tm.history.push_back(es);
        const bool stop = stopper.observe(es.val_loss);
        if (stopper.improved()) best_params = snapshot();
        if (stop) break;
    }
    tm.stopped_epoch = static_cast<int>(tm.history.size());
    tm.parameters = std::move(best_params);

    TrainResult result;
    result.model = std::move(tm);
    result.train_indices = std::move(train_idx);
    result.val_indices = std::move(val_idx);
    return result;
}

// Rebuilds a runnable model from a snapshot.
inline SequenceModel restore(const TrainedModel& tm) {
    SequenceModel model(tm.spec);
    auto params = model.params();
    if (params.size() != tm.parameters.size())
        throw ParamError("checkpoint parameter list does not match the architecture");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].value->shape != tm.parameters[i].shape)
            throw ParamError("checkpoint tensor shape mismatch at " + params[i].name);
        *params[i].value = tm.parameters[i];
    }
    return model;
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic, JSON header (spec + history), raw blobs.
// ---------------------------------------------------------------------------

inline nlohmann::json spec_to_json(const ModelSpec& s) {
    return nlohmann::json{{"arch", to_string(s.arch)},
                          {"n_frames", s.n_frames},
                          {"n_features", s.n_features},
                          {"n_classes", s.n_classes},
                          {"n_subsequences", s.n_subsequences},
                          {"conv_filters", s.conv_filters},
                          {"conv_kernel", s.conv_kernel},
                          {"lstm_units", s.lstm_units},
                          {"dense_units", s.dense_units},
                          {"conv_l1", s.conv_l1},
                          {"conv_l2", s.conv_l2},
                          {"dense_l2", s.dense_l2},
                          {"dropout_rate", s.dropout_rate},
                          {"output", s.output == OutputMode::Sigmoid ? "sigmoid" : "softmax"},
                          {"seed", s.seed}};
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.arch = arch_from_string(j.at("arch").get<std::string>());
    s.n_frames = j.at("n_frames").get<int>();
    s.n_features = j.at("n_features").get<int>();
    s.n_classes = j.at("n_classes").get<int>();
    s.n_subsequences = j.at("n_subsequences").get<int>();
    s.conv_filters = j.at("conv_filters").get<int>();
    s.conv_kernel = j.at("conv_kernel").get<int>();
    s.lstm_units = j.at("lstm_units").get<int>();
    s.dense_units = j.at("dense_units").get<int>();
    s.conv_l1 = j.at("conv_l1").get<double>();
    s.conv_l2 = j.at("conv_l2").get<double>();
    s.dense_l2 = j.at("dense_l2").get<double>();
    s.dropout_rate = j.at("dropout_rate").get<double>();
    s.output = j.at("output").get<std::string>() == "softmax" ? OutputMode::Softmax
                                                              : OutputMode::Sigmoid;
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

inline void save_checkpoint(const std::filesystem::path& path, const TrainedModel& tm) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint " + path.string());
    nlohmann::json header;
    header["spec"] = spec_to_json(tm.spec);
    header["stopped_epoch"] = tm.stopped_epoch;
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& e : tm.history)
        hist.push_back({{"train_loss", e.train_loss},
                        {"train_accuracy", e.train_accuracy},
                        {"val_loss", e.val_loss},
                        {"val_accuracy", e.val_accuracy}});
    header["history"] = std::move(hist);
    const std::string hs = header.dump();
    const char magic[8] = {'K', 'P', 'N', 'N', '0', '0', '0', '1'};
    os.write(magic, 8);
    const std::uint64_t hlen = hs.size();
    os.write(reinterpret_cast<const char*>(&hlen), 8);
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    const std::uint64_t n_tensors = tm.parameters.size();
    os.write(reinterpret_cast<const char*>(&n_tensors), 8);
    for (const auto& t : tm.parameters) {
        const std::uint64_t rank = t.shape.size();
        os.write(reinterpret_cast<const char*>(&rank), 8);
        for (std::size_t d : t.shape) {
            const std::uint64_t dd = d;
            os.write(reinterpret_cast<const char*>(&dd), 8);
        }
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
}

inline TrainedModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read checkpoint " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8 || std::memcmp(magic, "KPNN0001", 8) != 0)
        throw ParseError(path.string() + ": not a model checkpoint");
    std::uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hs);
    TrainedModel tm;
    tm.spec = spec_from_json(header.at("spec"));
    tm.stopped_epoch = header.at("stopped_epoch").get<int>();
    for (const auto& e : header.at("history")) {
        EpochStats es;
        es.train_loss = e.at("train_loss").get<double>();
        es.train_accuracy = e.at("train_accuracy").get<double>();
        es.val_loss = e.at("val_loss").get<double>();
        es.val_accuracy = e.at("val_accuracy").get<double>();
        tm.history.push_back(es);
    }
    std::uint64_t n_tensors = 0;
    is.read(reinterpret_cast<char*>(&n_tensors), 8);
    for (std::uint64_t ti = 0; ti < n_tensors; ++ti) {
        std::uint64_t rank = 0;
        is.read(reinterpret_cast<char*>(&rank), 8);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) {
            std::uint64_t dd = 0;
            is.read(reinterpret_cast<char*>(&dd), 8);
            d = dd;
        }
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!is) throw ParseError(path.string() + ": truncated checkpoint");
        tm.parameters.push_back(std::move(t));
    }
    return tm;
}

}  // namespace kinpipe::nn
