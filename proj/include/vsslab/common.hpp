// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vsslab {

// Error taxonomy. The CLI maps these onto exit codes
// (config 2, data format 3, numeric 4).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct dim_error : config_error {
    using config_error::config_error;
};
struct data_format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Stream-independent seed derivation, e.g. per (run seed, repetition) or
// per (epoch, sample id).
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream + 0x51ed2701ull));
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

template <typename T>
bool all_finite(std::span<const T> v) {
    for (const T& x : v) {
        if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
}

// exp with a fast single-precision path. Training runs in float where a
// ~2-ulp polynomial is plenty; the double overload stays on libm so the
// gradient-check suites see full precision.
inline double fast_exp(double x) { return std::exp(x); }

inline float fast_exp(float x) {
    x = std::min(88.0f, std::max(-87.0f, x));
    const float n = std::floor(x * 1.44269504f + 0.5f);
    float r = x - n * 0.693359375f;
    r -= n * -2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    union {
        uint32_t u;
        float f;
    } s;
    s.u = static_cast<uint32_t>(static_cast<int>(n) + 127) << 23;
    return p * s.f;
}

template <typename T>
T sigmoid(T x) {
    if (x >= T(0)) {
        T e = fast_exp(-x);
        return T(1) / (T(1) + e);
    }
    T e = fast_exp(x);
    return e / (T(1) + e);
}

template <typename T>
T softplus(T x) {
    if (x > T(20)) return x;
    if (x < T(-20)) return fast_exp(x);
    return std::log1p(fast_exp(x));
}

// Inverse of softplus, used to seed the timescale projection bias.
template <typename T>
T softplus_inverse(T y) {
    if (y > T(20)) return y;
    return std::log(std::expm1(y));
}

template <typename T>
T silu(T x) {
    return x * sigmoid(x);
}

template <typename T>
T silu_grad(T x) {
    T s = sigmoid(x);
    return s * (T(1) + x * (T(1) - s));
}

} // namespace vsslab
