#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "kinpipe/common.hpp"
#include "kinpipe/rng.hpp"
#include "kinpipe/tensor.hpp"

namespace kinpipe::nn {

enum class Activation { None, ReLU, Sigmoid, Tanh };

inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::None: return z;
        case Activation::ReLU: return z > 0.0 ? z : 0.0;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
        case Activation::Tanh: return std::tanh(z);
    }
    return z;
}

// Derivative expressed through the activation output y = f(z).
inline double activate_grad_from_output(Activation a, double y) {
    switch (a) {
        case Activation::None: return 1.0;
        case Activation::ReLU: return y > 0.0 ? 1.0 : 0.0;
        case Activation::Sigmoid: return y * (1.0 - y);
        case Activation::Tanh: return 1.0 - y * y;
    }
    return 1.0;
}

// Uniform init with fan-in variance scaling.
inline void init_uniform_fan_in(Tensor& w, std::size_t fan_in, Rng& rng) {
    const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
    for (double& x : w.data) x = rng.uniform(-limit, limit);
}

struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
    double l1 = 0.0, l2 = 0.0;  // kernel regularization (never on biases)
};

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

struct Dense {
    std::size_t in = 0, out = 0;
    Activation act = Activation::None;
    double l1 = 0.0, l2 = 0.0;
    Tensor w, b, gw, gb;
    Tensor x_, y_;  // caches

    Dense() = default;
    Dense(std::size_t in_dim, std::size_t out_dim, Activation a, double l1_ = 0.0,
          double l2_ = 0.0)
        : in(in_dim), out(out_dim), act(a), l1(l1_), l2(l2_), w({in_dim, out_dim}),
          b({out_dim}), gw({in_dim, out_dim}), gb({out_dim}) {}

    void init(Rng& rng) {
        init_uniform_fan_in(w, in, rng);
        b.zero();
    }

    // x: (B, in) -> (B, out)
    Tensor forward(const Tensor& x) {
        const std::size_t B = x.dim(0);
        Tensor y({B, out});
        for (std::size_t i = 0; i < B; ++i) std::memcpy(&y(i, 0), b.data.data(), out * sizeof(double));
        gemm_acc(B, in, out, x.data.data(), w.data.data(), y.data.data());
        for (double& v : y.data) v = activate(act, v);
        x_ = x;
        y_ = y;
        return y;
    }

    Tensor backward(const Tensor& gy) {
        const std::size_t B = gy.dim(0);
        Tensor gz = gy;
        for (std::size_t i = 0; i < gz.numel(); ++i)
            gz.data[i] *= activate_grad_from_output(act, y_.data[i]);
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t j = 0; j < out; ++j) gb(j) += gz(i, j);
        gemm_at_b_acc(B, in, out, x_.data.data(), gz.data.data(), gw.data.data());
        Tensor gx({B, in});
        gemm_a_bt_acc(B, in, out, gz.data.data(), w.data.data(), gx.data.data());
        return gx;
    }

    void collect(std::vector<ParamRef>& refs, const std::string& prefix) {
        refs.push_back({prefix + ".w", &w, &gw, l1, l2});
        refs.push_back({prefix + ".b", &b, &gb, 0.0, 0.0});
    }
};

// ---------------------------------------------------------------------------
// Conv1D (valid padding, stride 1)
// ---------------------------------------------------------------------------

struct Conv1d {
    std::size_t kernel = 3, cin = 0, cout = 0;
    Activation act = Activation::ReLU;
    double l1 = 0.0, l2 = 0.0;
    Tensor w, b, gw, gb;  // w: (kernel, cin, cout)
    Tensor y_, cols_, gcols_;
    std::vector<std::size_t> x_shape_;

    Conv1d() = default;
    Conv1d(std::size_t k, std::size_t in_ch, std::size_t out_ch, Activation a, double l1_ = 0.0,
           double l2_ = 0.0)
        : kernel(k), cin(in_ch), cout(out_ch), act(a), l1(l1_), l2(l2_),
          w({k, in_ch, out_ch}), b({out_ch}), gw({k, in_ch, out_ch}), gb({out_ch}) {}

    void init(Rng& rng) {
        init_uniform_fan_in(w, kernel * cin, rng);
        b.zero();
    }

    // x: (B, T, cin) -> (B, T - kernel + 1, cout). im2col: every output row
    // gathers its kernel window once, then the whole layer is a single
    // (B*To, kernel*cin) x (kernel*cin, cout) product. w's (k, cin, cout)
    // layout flattens to exactly the needed (kernel*cin, cout) matrix.
    Tensor forward(const Tensor& x) {
        const std::size_t B = x.dim(0), T = x.dim(1);
        if (T < kernel) throw ParamError("conv input shorter than kernel");
        const std::size_t To = T - kernel + 1;
        const std::size_t patch = kernel * cin;
        if (cols_.shape.empty() || cols_.dim(0) != B * To || cols_.dim(1) != patch)
            cols_ = Tensor({B * To, patch});
        for (std::size_t bi = 0; bi < B; ++bi)
            for (std::size_t t = 0; t < To; ++t)
                std::memcpy(&cols_(bi * To + t, 0), &x(bi, t, 0), patch * sizeof(double));
        Tensor y({B, To, cout});
        for (std::size_t r = 0; r < B * To; ++r)
            std::memcpy(&y.data[r * cout], b.data.data(), cout * sizeof(double));
        gemm_acc(B * To, patch, cout, cols_.data.data(), w.data.data(), y.data.data());
        for (double& v : y.data) v = activate(act, v);
        x_shape_ = x.shape;
        y_ = y;
        return y;
    }

    Tensor backward(const Tensor& gy) {
        const std::size_t B = x_shape_[0], T = x_shape_[1];
        const std::size_t To = T - kernel + 1;
        const std::size_t patch = kernel * cin;
        Tensor gz = gy;
        for (std::size_t i = 0; i < gz.numel(); ++i)
            gz.data[i] *= activate_grad_from_output(act, y_.data[i]);
        for (std::size_t r = 0; r < B * To; ++r)
            for (std::size_t co = 0; co < cout; ++co) gb(co) += gz.data[r * cout + co];
        gemm_at_b_acc(B * To, patch, cout, cols_.data.data(), gz.data.data(), gw.data.data());
        if (gcols_.shape.empty() || !(gcols_.shape == cols_.shape)) gcols_ = Tensor(cols_.shape);
        gcols_.zero();
        gemm_a_bt_acc(B * To, patch, cout, gz.data.data(), w.data.data(), gcols_.data.data());
        Tensor gx({B, T, cin});
        for (std::size_t bi = 0; bi < B; ++bi)
            for (std::size_t t = 0; t < To; ++t) {
                const double* src = &gcols_(bi * To + t, 0);
                double* dst = &gx(bi, t, 0);
                for (std::size_t p = 0; p < patch; ++p) dst[p] += src[p];
            }
        return gx;
    }

    void collect(std::vector<ParamRef>& refs, const std::string& prefix) {
        refs.push_back({prefix + ".w", &w, &gw, l1, l2});
        refs.push_back({prefix + ".b", &b, &gb, 0.0, 0.0});
    }
};

// ---------------------------------------------------------------------------
// MaxPool1D (pool = stride), remainder frames dropped
// ---------------------------------------------------------------------------

struct MaxPool1d {
    std::size_t pool = 2;
    std::vector<std::size_t> argmax_;
    std::vector<std::size_t> in_shape_;

    explicit MaxPool1d(std::size_t p = 2) : pool(p) {}

    Tensor forward(const Tensor& x) {
        const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
        const std::size_t To = T / pool;
        Tensor y({B, To, C});
        argmax_.assign(B * To * C, 0);
        in_shape_ = x.shape;
        for (std::size_t bi = 0; bi < B; ++bi)
            for (std::size_t t = 0; t < To; ++t)
                for (std::size_t c = 0; c < C; ++c) {
                    std::size_t best = t * pool;
                    double bv = x(bi, best, c);
                    for (std::size_t k = 1; k < pool; ++k) {
                        const double v = x(bi, t * pool + k, c);
                        if (v > bv) {
                            bv = v;
                            best = t * pool + k;
                        }
                    }
                    y(bi, t, c) = bv;
                    argmax_[(bi * To + t) * C + c] = best;
                }
        return y;
    }

    Tensor backward(const Tensor& gy) {
        Tensor gx(in_shape_);
        const std::size_t B = gy.dim(0), To = gy.dim(1), C = gy.dim(2);
        for (std::size_t bi = 0; bi < B; ++bi)
            for (std::size_t t = 0; t < To; ++t)
                for (std::size_t c = 0; c < C; ++c)
                    gx(bi, argmax_[(bi * To + t) * C + c], c) += gy(bi, t, c);
        return gx;
    }
};

// ---------------------------------------------------------------------------
// Dropout (inverted scaling; identity outside training)
// ---------------------------------------------------------------------------

struct Dropout {
    double rate = 0.5;
    std::vector<double> scale_;
    bool active_ = false;

    explicit Dropout(double r = 0.5) : rate(r) {}

    Tensor forward(const Tensor& x, bool training, Rng* rng) {
        if (!training || rate <= 0.0) {
            active_ = false;
            return x;
        }
        active_ = true;
        scale_.resize(x.numel());
        const double keep = 1.0 - rate;
        Tensor y = x;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const bool on = rng->uniform() >= rate;
            scale_[i] = on ? 1.0 / keep : 0.0;
            y.data[i] *= scale_[i];
        }
        return y;
    }

    Tensor backward(const Tensor& gy) {
        if (!active_) return gy;
        Tensor gx = gy;
        for (std::size_t i = 0; i < gx.numel(); ++i) gx.data[i] *= scale_[i];
        return gx;
    }
};

// ---------------------------------------------------------------------------
// LSTM returning the state after the last valid timestep. Masked steps leave
// hidden and cell state untouched, so right-padding can never change the
// output. Gate layout follows the usual [i, f, g, o] convention with the
// forget-gate bias initialized to 1.
// ---------------------------------------------------------------------------

struct Lstm {
    std::size_t in = 0, units = 0;
    double l1 = 0.0, l2 = 0.0;  // on the input kernel only
    Tensor w, u, b, gw, gu, gb;  // w: (in, 4u), u: (units, 4u), b: (4u)

    // caches for backprop (step-major)
    std::size_t B_ = 0, T_ = 0;
    Tensor x_;    // owned: the input batch must outlive backward()
    Mask maskc_;  // copy of the step mask, empty when absent
    std::vector<std::uint8_t> any_live_;  // per step: any unmasked row at all
    Tensor xt_, gxt_;  // contiguous per-step staging buffers
    Tensor wt_, ut_;   // kernel transposes for the backward sweep
    std::vector<Tensor> gates_;  // per step: (B, 4u) post-activation
    std::vector<Tensor> cells_;  // per step: (B, u) cell state after the step
    std::vector<Tensor> hidden_; // per step: (B, u) hidden state after the step

    Lstm() = default;
    Lstm(std::size_t in_dim, std::size_t n_units, double l1_ = 0.0, double l2_ = 0.0)
        : in(in_dim), units(n_units), l1(l1_), l2(l2_), w({in_dim, 4 * n_units}),
          u({n_units, 4 * n_units}), b({4 * n_units}), gw({in_dim, 4 * n_units}),
          gu({n_units, 4 * n_units}), gb({4 * n_units}) {}

    void init(Rng& rng) {
        init_uniform_fan_in(w, in, rng);
        init_uniform_fan_in(u, units, rng);
        b.zero();
        for (std::size_t j = units; j < 2 * units; ++j) b(j) = 1.0;  // forget gate
    }

    // x: (B, T, in), mask: optional (B, T) -> (B, units)
    Tensor forward(const Tensor& x, const Mask* mask) {
        B_ = x.dim(0);
        T_ = x.dim(1);
        x_ = x;
        maskc_ = mask ? *mask : Mask();
        // caches persist across calls; reallocate only on shape changes
        if (gates_.size() != T_ || gates_.empty() || gates_[0].dim(0) != B_ ||
            gates_[0].dim(1) != 4 * units) {
            gates_.assign(T_, Tensor({B_, 4 * units}));
            cells_.assign(T_, Tensor({B_, units}));
            hidden_.assign(T_, Tensor({B_, units}));
        }
        any_live_.assign(T_, 1);
        Tensor h({B_, units}), c({B_, units});
        Tensor z({B_, 4 * units});
        for (std::size_t t = 0; t < T_; ++t) {
            if (mask) {
                bool live = false;
                for (std::size_t i = 0; i < B_ && !live; ++i) live = mask->at(i, t);
                if (!live) {
                    // whole batch padded out at this step: state carries over
                    any_live_[t] = 0;
                    cells_[t] = c;
                    hidden_[t] = h;
                    continue;
                }
            }
            for (std::size_t i = 0; i < B_; ++i)
                std::memcpy(&z(i, 0), b.data.data(), 4 * units * sizeof(double));
            // gather the strided step rows into a contiguous (B, in) buffer so
            // the input kernel product runs as one GEMM
            if (xt_.shape.empty() || xt_.dim(0) != B_) xt_ = Tensor({B_, in});
            for (std::size_t i = 0; i < B_; ++i)
                std::memcpy(&xt_(i, 0), &x(i, t, 0), in * sizeof(double));
            gemm_acc(B_, in, 4 * units, xt_.data.data(), w.data.data(), z.data.data());
            gemm_acc(B_, units, 4 * units, h.data.data(), u.data.data(), z.data.data());
            Tensor& g = gates_[t];
            Tensor& ct = cells_[t];
            Tensor& ht = hidden_[t];
            for (std::size_t i = 0; i < B_; ++i) {
                const bool live = !mask || mask->at(i, t);
                if (!live) {
                    for (std::size_t j = 0; j < units; ++j) {
                        ct(i, j) = c(i, j);
                        ht(i, j) = h(i, j);
                    }
                    continue;
                }
                double* zrow = &z(i, 0);
                double* grow = &g(i, 0);
                for (std::size_t j = 0; j < units; ++j) {
                    const double gi = 1.0 / (1.0 + std::exp(-zrow[j]));
                    const double gf = 1.0 / (1.0 + std::exp(-zrow[units + j]));
                    const double gg = std::tanh(zrow[2 * units + j]);
                    const double go = 1.0 / (1.0 + std::exp(-zrow[3 * units + j]));
                    grow[j] = gi;
                    grow[units + j] = gf;
                    grow[2 * units + j] = gg;
                    grow[3 * units + j] = go;
                    const double cv = gf * c(i, j) + gi * gg;
                    ct(i, j) = cv;
                    ht(i, j) = go * std::tanh(cv);
                }
            }
            h = ht;
            c = ct;
        }
        return h;
    }

    // gh_last: (B, units) gradient at the final hidden state.
    Tensor backward(const Tensor& gh_last) {
        Tensor gx({B_, T_, in});
        Tensor dh = gh_last;
        Tensor dc({B_, units});
        Tensor dz({B_, 4 * units});
        Tensor dh_prev({B_, units});
        Tensor dc_prev({B_, units});
        if (gxt_.shape.empty() || gxt_.dim(0) != B_) gxt_ = Tensor({B_, in});
        if (xt_.shape.empty() || xt_.dim(0) != B_) xt_ = Tensor({B_, in});
        // transposed kernels shared by every step of the backward sweep
        if (wt_.shape.empty()) wt_ = Tensor({4 * units, in});
        if (ut_.shape.empty()) ut_ = Tensor({4 * units, units});
        transpose_into(in, 4 * units, w.data.data(), wt_.data.data());
        transpose_into(units, 4 * units, u.data.data(), ut_.data.data());
        for (std::size_t t = T_; t-- > 0;) {
            if (!any_live_[t]) continue;  // dead step: dh and dc pass straight through
            const Tensor& g = gates_[t];
            const Tensor& ct = cells_[t];
            // previous states
            const Tensor* cprev = t > 0 ? &cells_[t - 1] : nullptr;
            const Tensor* hprev = t > 0 ? &hidden_[t - 1] : nullptr;
            dz.zero();
            dh_prev.zero();
            dc_prev.zero();
            for (std::size_t i = 0; i < B_; ++i) {
                const bool live = maskc_.empty() || maskc_.at(i, t);
                if (!live) {
                    // state passed straight through: gradients do too
                    for (std::size_t j = 0; j < units; ++j) {
                        dh_prev(i, j) = dh(i, j);
                        dc_prev(i, j) = dc(i, j);
                    }
                    continue;
                }
                const double* grow = &g(i, 0);
                double* dzrow = &dz(i, 0);
                for (std::size_t j = 0; j < units; ++j) {
                    const double gi = grow[j];
                    const double gf = grow[units + j];
                    const double gg = grow[2 * units + j];
                    const double go = grow[3 * units + j];
                    const double tc = std::tanh(ct(i, j));
                    const double dht = dh(i, j);
                    const double dct = dht * go * (1.0 - tc * tc) + dc(i, j);
                    const double cp = cprev ? (*cprev)(i, j) : 0.0;
                    dzrow[j] = dct * gg * gi * (1.0 - gi);
                    dzrow[units + j] = dct * cp * gf * (1.0 - gf);
                    dzrow[2 * units + j] = dct * gi * (1.0 - gg * gg);
                    dzrow[3 * units + j] = dht * tc * go * (1.0 - go);
                    dc_prev(i, j) = dct * gf;
                }
            }
            // parameter gradients: contiguous x_t buffer, then plain GEMMs
            for (std::size_t i = 0; i < B_; ++i) {
                std::memcpy(&xt_(i, 0), &x_(i, t, 0), in * sizeof(double));
                const double* dzrow = &dz(i, 0);
                for (std::size_t j = 0; j < 4 * units; ++j) gb(j) += dzrow[j];
            }
            gemm_at_b_acc(B_, in, 4 * units, xt_.data.data(), dz.data.data(), gw.data.data());
            if (hprev)
                gemm_at_b_acc(B_, units, 4 * units, hprev->data.data(), dz.data.data(),
                              gu.data.data());
            // input gradient and recurrent hidden gradient
            gxt_.zero();
            gemm_acc(B_, 4 * units, in, dz.data.data(), wt_.data.data(), gxt_.data.data());
            for (std::size_t i = 0; i < B_; ++i)
                std::memcpy(&gx(i, t, 0), &gxt_(i, 0), in * sizeof(double));
            gemm_acc(B_, 4 * units, units, dz.data.data(), ut_.data.data(),
                     dh_prev.data.data());
            std::swap(dh, dh_prev);
            std::swap(dc, dc_prev);
        }
        return gx;
    }

    void collect(std::vector<ParamRef>& refs, const std::string& prefix) {
        refs.push_back({prefix + ".w", &w, &gw, l1, l2});
        refs.push_back({prefix + ".u", &u, &gu, 0.0, 0.0});
        refs.push_back({prefix + ".b", &b, &gb, 0.0, 0.0});
    }
};

}  // namespace kinpipe::nn
