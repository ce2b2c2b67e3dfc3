// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "vsslab/common.hpp"

namespace vsslab {

// Dense row-major buffer with an explicit shape. Deliberately minimal:
// the compute kernels work on raw spans, this is bookkeeping.
template <typename T>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(count(shape)), T(0));
    }

    static int64_t count(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        return n;
    }

    int64_t size() const { return static_cast<int64_t>(v.size()); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    std::span<T> span() { return {v.data(), v.size()}; }
    std::span<const T> span() const { return {v.data(), v.size()}; }
};

// ---- small dense kernels -------------------------------------------------
// All matrices row-major. Loops are arranged so the innermost index is
// contiguous; -O3 vectorizes these well enough for desk-scale models.

// C[m x n] = A[m x k] * B[k x n]   (C overwritten; buffers must not alias)
template <typename T>
void matmul(const T* __restrict__ a, const T* __restrict__ b, T* __restrict__ c,
            int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        T* __restrict__ ci = c + static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) ci[j] = T(0);
        const T* ai = a + static_cast<int64_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T apv = ai[p];
            const T* __restrict__ bp = b + static_cast<int64_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += apv * bp[j];
        }
    }
}

// C[m x k] += A[m x n] * B^T   with B[k x n]  (i.e. dX = dY * W^T)
template <typename T>
void matmul_nt_acc(const T* __restrict__ a, const T* __restrict__ b, T* __restrict__ c,
                   int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const T* ai = a + static_cast<int64_t>(i) * n;
        T* __restrict__ ci = c + static_cast<int64_t>(i) * k;
        for (int q = 0; q < k; ++q) {
            const T* __restrict__ bq = b + static_cast<int64_t>(q) * n;
            T acc = T(0);
            for (int j = 0; j < n; ++j) acc += ai[j] * bq[j];
            ci[q] += acc;
        }
    }
}

// C[k x n] += A^T * B   with A[m x k], B[m x n]  (i.e. dW = X^T * dY)
template <typename T>
void matmul_tn_acc(const T* __restrict__ a, const T* __restrict__ b, T* __restrict__ c,
                   int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* ai = a + static_cast<int64_t>(i) * k;
        const T* __restrict__ bi = b + static_cast<int64_t>(i) * n;
        for (int q = 0; q < k; ++q) {
            const T av = ai[q];
            if (av == T(0)) continue;
            T* __restrict__ cq = c + static_cast<int64_t>(q) * n;
            for (int j = 0; j < n; ++j) cq[j] += av * bi[j];
        }
    }
}

template <typename T>
void fill_uniform(std::span<T> out, T lo, T hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (T& x : out) x = static_cast<T>(dist(rng));
}

// Zero-mean uniform with fan-in scaling: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void fill_fan_in(std::span<T> out, int fan_in, std::mt19937_64& rng) {
    const T bound = T(1) / std::sqrt(static_cast<T>(fan_in > 0 ? fan_in : 1));
    fill_uniform(out, -bound, bound, rng);
}

} // namespace vsslab
