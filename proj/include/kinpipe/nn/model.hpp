#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "kinpipe/common.hpp"
#include "kinpipe/nn/layers.hpp"
#include "kinpipe/rng.hpp"
#include "kinpipe/tensor.hpp"

namespace kinpipe::nn {

enum class Arch { CnnLstmDnn, MaskedLstmDnn };
enum class OutputMode { Sigmoid, Softmax };

inline std::string to_string(Arch a) {
    return a == Arch::CnnLstmDnn ? "cnn-lstm-dnn" : "masked-lstm-dnn";
}

inline Arch arch_from_string(const std::string& s) {
    if (s == "cnn-lstm-dnn") return Arch::CnnLstmDnn;
    if (s == "masked-lstm-dnn") return Arch::MaskedLstmDnn;
    throw SchemaError("arch '" + s + "' is not cnn-lstm-dnn or masked-lstm-dnn");
}

struct ModelSpec {
    Arch arch = Arch::CnnLstmDnn;
    int n_frames = 32;   // fixed input length (max length for the masked model)
    int n_features = 4;
    int n_classes = 2;
    // convolutional front end (CnnLstmDnn only)
    int n_subsequences = 4;
    int conv_filters = 64;
    int conv_kernel = 3;
    // recurrent / dense trunk
    int lstm_units = 100;
    int dense_units = 100;
    // regularization and dropout
    double conv_l1 = 0.001;
    double conv_l2 = 0.002;
    double dense_l2 = 0.001;
    double dropout_rate = 0.5;
    OutputMode output = OutputMode::Sigmoid;
    std::uint64_t seed = 0;
};

// Two time-distributed Conv1D blocks over 4 subsequences, max pooling and
// flattening, then LSTM(100) -> Dense(100) -> 2 output units.
inline ModelSpec build_cnn_lstm_dnn(int n_frames = 32, int n_features = 4) {
    ModelSpec s;
    s.arch = Arch::CnnLstmDnn;
    if (n_frames % s.n_subsequences != 0)
        throw ParamError("frame count must divide into " + std::to_string(s.n_subsequences) +
                         " subsequences");
    s.n_frames = n_frames;
    s.n_features = n_features;
    s.lstm_units = 100;
    s.dense_units = 100;
    return s;
}

// Masking stage, LSTM(64) -> Dense(32) -> 2 output units; handles
// variable-length zero-padded sequences.
inline ModelSpec build_masked_lstm_dnn(int max_frames = 132, int n_features = 4) {
    ModelSpec s;
    s.arch = Arch::MaskedLstmDnn;
    s.n_frames = max_frames;
    s.n_features = n_features;
    s.lstm_units = 64;
    s.dense_units = 32;
    return s;
}

// Concrete network for either architecture. Forward/backward are hand-rolled
// per layer; the parameter registry drives the optimizer, checkpointing and
// the finite-difference checks.
class SequenceModel {
public:
    explicit SequenceModel(const ModelSpec& spec) : spec_(spec) {
        Rng rng(mix_seed(spec.seed, 0x90de1));
        const std::size_t F = static_cast<std::size_t>(spec.n_features);
        const std::size_t H = static_cast<std::size_t>(spec.lstm_units);
        const std::size_t D = static_cast<std::size_t>(spec.dense_units);
        const std::size_t K = static_cast<std::size_t>(spec.n_classes);
        if (spec.arch == Arch::CnnLstmDnn) {
            const std::size_t filt = static_cast<std::size_t>(spec.conv_filters);
            const std::size_t kern = static_cast<std::size_t>(spec.conv_kernel);
            sub_len_ = static_cast<std::size_t>(spec.n_frames / spec.n_subsequences);
            conv1_ = Conv1d(kern, F, filt, Activation::ReLU, spec.conv_l1, spec.conv_l2);
            conv2_ = Conv1d(kern, filt, filt, Activation::ReLU, spec.conv_l1, spec.conv_l2);
            const std::size_t t_conv = sub_len_ - 2 * (kern - 1);
            if (t_conv < pool_.pool)
                throw ParamError("subsequence too short for the conv/pool stack");
            flat_ = (t_conv / pool_.pool) * filt;
            lstm_ = Lstm(flat_, H);
            conv1_.init(rng);
            conv2_.init(rng);
        } else {
            lstm_ = Lstm(F, H, spec.conv_l1, spec.conv_l2);
        }
        dense_ = Dense(H, D, Activation::ReLU, 0.0, spec.dense_l2);
        head_ = Dense(D, K,
                      spec.output == OutputMode::Sigmoid ? Activation::Sigmoid
                                                         : Activation::None);
        drop_conv_ = Dropout(spec.dropout_rate);
        drop_lstm_ = Dropout(spec.dropout_rate);
        lstm_.init(rng);
        dense_.init(rng);
        head_.init(rng);
    }

    const ModelSpec& spec() const { return spec_; }

    std::vector<ParamRef> params() {
        std::vector<ParamRef> refs;
        if (spec_.arch == Arch::CnnLstmDnn) {
            conv1_.collect(refs, "conv1");
            conv2_.collect(refs, "conv2");
        }
        lstm_.collect(refs, "lstm");
        dense_.collect(refs, "dense");
        head_.collect(refs, "head");
        return refs;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (const auto& p : params()) n += p.value->numel();
        return n;
    }

    void zero_grads() {
        for (auto& p : params()) p.grad->zero();
    }

    // batch: (B, T, F); mask: optional (B, T). Returns class scores (B, K).
    Tensor forward(const Tensor& batch, const Mask* mask, bool training = false,
                   Rng* rng = nullptr) {
        if (batch.rank() != 3 || batch.dim(2) != static_cast<std::size_t>(spec_.n_features))
            throw ParamError("batch shape does not match the model spec");
        if (training && spec_.dropout_rate > 0.0 && rng == nullptr)
            throw ParamError("training-mode forward needs an RNG for dropout");
        Tensor h;
        if (spec_.arch == Arch::CnnLstmDnn) {
            if (batch.dim(1) != static_cast<std::size_t>(spec_.n_frames))
                throw ParamError("fixed-length model expects " +
                                 std::to_string(spec_.n_frames) + " frames");
            const std::size_t B = batch.dim(0);
            const std::size_t S = static_cast<std::size_t>(spec_.n_subsequences);
            // (B, S*sub_len, F) is contiguous as (B*S, sub_len, F): the
            // time-distributed conv stack runs as one big batch.
            Tensor folded = batch;
            folded.shape = {B * S, sub_len_, static_cast<std::size_t>(spec_.n_features)};
            Tensor c1 = conv1_.forward(folded);
            Tensor c2 = conv2_.forward(c1);
            Tensor cd = drop_conv_.forward(c2, training, rng);
            Tensor pooled = pool_.forward(cd);
            pooled.shape = {B, S, flat_};  // flatten per subsequence
            h = lstm_.forward(pooled, nullptr);
        } else {
            h = lstm_.forward(batch, mask);
        }
        Tensor hd = drop_lstm_.forward(h, training, rng);
        Tensor d = dense_.forward(hd);
        Tensor scores = head_.forward(d);
        if (spec_.output == OutputMode::Softmax) {
            softmax_cache_ = scores;
            for (std::size_t i = 0; i < scores.dim(0); ++i) {
                double mx = scores(i, 0);
                for (std::size_t k = 1; k < scores.dim(1); ++k) mx = std::max(mx, scores(i, k));
                double s = 0.0;
                for (std::size_t k = 0; k < scores.dim(1); ++k) {
                    scores(i, k) = std::exp(scores(i, k) - mx);
                    s += scores(i, k);
                }
                for (std::size_t k = 0; k < scores.dim(1); ++k) scores(i, k) /= s;
            }
            softmax_out_ = scores;
        }
        return scores;
    }

    // Reverse pass from the gradient at the score outputs.
    void backward(const Tensor& gscores) {
        Tensor g = gscores;
        if (spec_.output == OutputMode::Softmax) {
            // d softmax: g_z = p * (g - sum(g * p))
            Tensor gz = g;
            for (std::size_t i = 0; i < g.dim(0); ++i) {
                double dot = 0.0;
                for (std::size_t k = 0; k < g.dim(1); ++k) dot += g(i, k) * softmax_out_(i, k);
                for (std::size_t k = 0; k < g.dim(1); ++k)
                    gz(i, k) = softmax_out_(i, k) * (g(i, k) - dot);
            }
            g = gz;
        }
        Tensor gd = head_.backward(g);
        Tensor gh = dense_.backward(gd);
        Tensor ghd = drop_lstm_.backward(gh);
        Tensor gseq = lstm_.backward(ghd);
        if (spec_.arch == Arch::CnnLstmDnn) {
            // (B, S, flat) -> (B*S, pooled_t, cout): undo the flatten
            const std::size_t BS = gseq.dim(0) * gseq.dim(1);
            gseq.shape = {BS, flat_ / conv2_.cout, conv2_.cout};
            Tensor gpool = pool_.backward(gseq);
            Tensor gcd = drop_conv_.backward(gpool);
            Tensor gc1 = conv2_.backward(gcd);
            conv1_.backward(gc1);
        }
    }

    // Mean categorical cross-entropy over sum-normalized class scores, plus
    // the kernel regularization penalties. Fills every parameter gradient.
    double loss_and_gradients(const Tensor& batch, const Mask* mask, const Tensor& labels,
                              bool training = false, Rng* rng = nullptr) {
        const Tensor scores = forward(batch, mask, training, rng);
        last_scores_ = scores;
        const std::size_t B = scores.dim(0), K = scores.dim(1);
        zero_grads();
        double data_loss = 0.0;
        Tensor gscores({B, K});
        constexpr double kClip = 1e-12;
        for (std::size_t i = 0; i < B; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += scores(i, k);
            if (s <= 0.0) s = kClip;
            for (std::size_t k = 0; k < K; ++k) {
                const double p = std::max(scores(i, k) / s, kClip);
                data_loss -= labels(i, k) * std::log(p);
            }
            // d/ds of -sum_k y_k log(s_k / S)
            double ysum = 0.0;
            for (std::size_t k = 0; k < K; ++k) ysum += labels(i, k);
            for (std::size_t k = 0; k < K; ++k) {
                const double sk = std::max(scores(i, k), kClip * s);
                gscores(i, k) = (-labels(i, k) / sk + ysum / s) / static_cast<double>(B);
            }
        }
        data_loss /= static_cast<double>(B);
        backward(gscores);
        double reg_loss = 0.0;
        for (auto& p : params()) {
            if (p.l1 == 0.0 && p.l2 == 0.0) continue;
            for (std::size_t i = 0; i < p.value->numel(); ++i) {
                const double wv = p.value->data[i];
                reg_loss += p.l1 * std::fabs(wv) + p.l2 * wv * wv;
                p.grad->data[i] += p.l1 * (wv > 0.0 ? 1.0 : wv < 0.0 ? -1.0 : 0.0) +
                                   2.0 * p.l2 * wv;
            }
        }
        const double total = data_loss + reg_loss;
        if (!std::isfinite(total)) throw DivergenceError("non-finite loss at layer " + offender());
        return total;
    }

    // Scores of the batch most recently passed through loss_and_gradients;
    // lets the trainer log running accuracy without a second forward pass.
    const Tensor& last_scores() const { return last_scores_; }

    // Regularization penalty alone (used for validation-loss parity).
    double regularization_loss() {
        double reg = 0.0;
        for (auto& p : params()) {
            if (p.l1 == 0.0 && p.l2 == 0.0) continue;
            for (double wv : p.value->data) reg += p.l1 * std::fabs(wv) + p.l2 * wv * wv;
        }
        return reg;
    }

private:
    std::string offender() {
        for (auto& p : params())
            for (double v : p.value->data)
                if (!std::isfinite(v)) return p.name;
        return "loss";
    }

    ModelSpec spec_;
    std::size_t sub_len_ = 0, flat_ = 0;
    Conv1d conv1_, conv2_;
    MaxPool1d pool_{2};
    Dropout drop_conv_{0.5}, drop_lstm_{0.5};
    Lstm lstm_;
    Dense dense_, head_;
    Tensor softmax_cache_, softmax_out_, last_scores_;
};

}  // namespace kinpipe::nn
