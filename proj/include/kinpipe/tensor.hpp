#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "kinpipe/common.hpp"

namespace kinpipe {

// Dense n-dimensional row-major float64 array. Deliberately minimal: the
// layers index into raw data with explicit strides where speed matters.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}
    Tensor(std::initializer_list<std::size_t> s) : Tensor(std::vector<std::size_t>(s)) {}

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }

    double& operator()(std::size_t i) { return data[i]; }
    const double& operator()(std::size_t i) const { return data[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    const double& operator()(std::size_t i, std::size_t j) const {
        return data[i * shape[1] + j];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    const double& operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(0.0); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Per-frame validity mask for a batch of right-padded sequences.
struct Mask {
    std::size_t rows = 0, cols = 0;
    std::vector<std::uint8_t> v;

    Mask() = default;
    Mask(std::size_t r, std::size_t c, std::uint8_t init = 1) : rows(r), cols(c), v(r * c, init) {}

    std::uint8_t at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    void set(std::size_t r, std::size_t c, bool b) { v[r * cols + c] = b ? 1 : 0; }
    bool empty() const { return v.empty(); }
};

// C (MxN) += A (MxK) * B (KxN), all row-major. Two C rows per pass and a
// four-wide k unroll: each streamed B row feeds eight multiply-adds.
inline void gemm_acc(std::size_t M, std::size_t K, std::size_t N, const double* A,
                     const double* B, double* C) {
    std::size_t i = 0;
    for (; i + 2 <= M; i += 2) {
        const double* a0 = A + i * K;
        const double* a1 = a0 + K;
        double* c0 = C + i * N;
        double* c1 = c0 + N;
        std::size_t k = 0;
        for (; k + 4 <= K; k += 4) {
            const double a00 = a0[k], a01 = a0[k + 1], a02 = a0[k + 2], a03 = a0[k + 3];
            const double a10 = a1[k], a11 = a1[k + 1], a12 = a1[k + 2], a13 = a1[k + 3];
            const double* b0 = B + k * N;
            const double* b1 = b0 + N;
            const double* b2 = b1 + N;
            const double* b3 = b2 + N;
            for (std::size_t j = 0; j < N; ++j) {
                const double v0 = b0[j], v1 = b1[j], v2 = b2[j], v3 = b3[j];
                c0[j] += a00 * v0 + a01 * v1 + a02 * v2 + a03 * v3;
                c1[j] += a10 * v0 + a11 * v1 + a12 * v2 + a13 * v3;
            }
        }
        for (; k < K; ++k) {
            const double w0 = a0[k], w1 = a1[k];
            const double* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j) {
                c0[j] += w0 * b[j];
                c1[j] += w1 * b[j];
            }
        }
    }
    for (; i < M; ++i) {
        const double* a = A + i * K;
        double* c = C + i * N;
        std::size_t k = 0;
        for (; k + 4 <= K; k += 4) {
            const double a0 = a[k], a1 = a[k + 1], a2 = a[k + 2], a3 = a[k + 3];
            const double* b0 = B + k * N;
            const double* b1 = b0 + N;
            const double* b2 = b1 + N;
            const double* b3 = b2 + N;
            for (std::size_t j = 0; j < N; ++j)
                c[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; k < K; ++k) {
            const double aik = a[k];
            const double* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += aik * b[j];
        }
    }
}

// At (NxM) = transpose of A (MxN).
inline void transpose_into(std::size_t M, std::size_t N, const double* A, double* At) {
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) At[j * M + i] = A[i * N + j];
}

namespace detail {
inline std::vector<double>& gemm_scratch() {
    thread_local std::vector<double> scratch;
    return scratch;
}
}  // namespace detail

// C (KxN) += A^T * B where A is (MxK), B is (MxN). Transposing A first keeps
// the inner loops in the streaming form the compiler vectorizes.
inline void gemm_at_b_acc(std::size_t M, std::size_t K, std::size_t N, const double* A,
                          const double* B, double* C) {
    auto& scratch = detail::gemm_scratch();
    if (scratch.size() < M * K) scratch.resize(M * K);
    transpose_into(M, K, A, scratch.data());
    gemm_acc(K, M, N, scratch.data(), B, C);
}

// C (MxK) += A * B^T where A is (MxN), B is (KxN).
inline void gemm_a_bt_acc(std::size_t M, std::size_t K, std::size_t N, const double* A,
                          const double* B, double* C) {
    auto& scratch = detail::gemm_scratch();
    if (scratch.size() < K * N) scratch.resize(K * N);
    transpose_into(K, N, B, scratch.data());
    gemm_acc(M, N, K, A, scratch.data(), C);
}

}  // namespace kinpipe
