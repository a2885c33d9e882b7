// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Row-major dense kernels. Every output element is reduced over the inner
// index in ascending order, independent of how many rows are processed, so a
// row computed inside a batch is bitwise identical to the same row computed
// alone.

#pragma once

#include <cstddef>
#include <vector>

namespace looplab::kernels {

/// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                        std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t r = 0; r < k; ++r) {
            const double air = ai[r];
            const double* br = b + r * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += air * br[j];
        }
    }
}

/// C[m x n] += A[m x k] * B[n x k]^T
inline void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                        std::size_t n) {
    std::vector<double> bt(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t r = 0; r < k; ++r) bt[r * n + j] = b[j * k + r];
    gemm_nn_acc(a, bt.data(), c, m, k, n);
}

/// C[m x n] += A[k x m]^T * B[k x n]
inline void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
                        std::size_t n) {
    for (std::size_t r = 0; r < k; ++r) {
        const double* ar = a + r * m;
        const double* br = b + r * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double ari = ar[i];
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += ari * br[j];
        }
    }
}

}  // namespace looplab::kernels
