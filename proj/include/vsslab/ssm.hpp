// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Diagonal state-space primitives: ZOH discretization, sequential scan,
// convolution-kernel form, and the input-dependent (selective) scan with
// analytic gradients. Kernels come in a serial flavor and an OpenMP
// flavor over independent channels; both produce bitwise-identical
// output, the serial one is the reference the tests pin down.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vsslab/common.hpp"
#include "vsslab/tensor.hpp"

namespace vsslab::ssm {

// |delta*A| below this uses the first-order limit B_bar = delta*B.
inline constexpr double kZohTaylorCutoff = 1e-8;

template <typename T>
struct ContinuousSsm {
    std::vector<T> a; // diagonal of the evolution matrix, length n_state
    std::vector<T> b; // input projection, length n_state
    std::vector<T> c; // output projection, length n_state
};

template <typename T>
struct DiscreteSsm {
    std::vector<T> a_bar;
    std::vector<T> b_bar;
    std::vector<T> c;
    T delta{};
};

template <typename T>
struct ScanSequence {
    std::vector<T> x;  // inputs, length m >= 1
    std::vector<T> h0; // initial hidden state, empty means all-zero
};

// ab = exp(u), f = (exp(u)-1)/u with the small-|u| branch pinned to 1.
template <typename T>
inline void zoh_factors(T u, T& ab, T& f) {
    ab = fast_exp(u);
    f = (std::abs(u) < T(kZohTaylorCutoff)) ? T(1) : (ab - T(1)) / u;
}

// d/du [(exp(u)-1)/u]; limit 1/2 at u = 0.
template <typename T>
inline T zoh_f_grad(T u, T ab) {
    if (std::abs(u) < T(kZohTaylorCutoff)) return T(0.5);
    return (u * ab - ab + T(1)) / (u * u);
}

template <typename T>
DiscreteSsm<T> zoh_discretize(const ContinuousSsm<T>& s, T delta) {
    if (!(delta > T(0)) || !std::isfinite(static_cast<double>(delta)))
        throw config_error("zoh_discretize: delta must be positive and finite");
    if (s.a.size() != s.b.size() || s.a.size() != s.c.size() || s.a.empty())
        throw dim_error("zoh_discretize: inconsistent state dimensions");
    if (!all_finite<T>(s.a) || !all_finite<T>(s.b) || !all_finite<T>(s.c))
        throw config_error("zoh_discretize: non-finite parameter");

    const size_t n = s.a.size();
    DiscreteSsm<T> d;
    d.delta = delta;
    d.a_bar.resize(n);
    d.b_bar.resize(n);
    d.c = s.c;
    for (size_t i = 0; i < n; ++i) {
        T ab, f;
        zoh_factors(delta * s.a[i], ab, f);
        d.a_bar[i] = ab;
        d.b_bar[i] = f * delta * s.b[i];
    }
    return d;
}

namespace detail {
// Resolves a parameter span that is either length n (time-invariant,
// broadcast over steps) or m*n (one row per step).
template <typename T>
inline const T* step_row(std::span<const T> p, size_t t, size_t n) {
    return p.size() == n ? p.data() : p.data() + t * n;
}

template <typename T>
inline void check_step_param(std::span<const T> p, size_t m, size_t n, const char* what) {
    if (p.size() != n && p.size() != m * n)
        throw dim_error(std::string("scan_sequential: ") + what +
                        " must have length n_state or m*n_state");
}
} // namespace detail

// h_t = a_bar_t (.) h_{t-1} + b_bar_t * x_t;  y_t = <c_t, h_t>.
// Parameter spans are broadcast when given length n_state.
template <typename T>
std::vector<T> scan_sequential(size_t n_state, std::span<const T> a_bar,
                               std::span<const T> b_bar, std::span<const T> c,
                               std::span<const T> x, std::span<const T> h0 = {}) {
    const size_t m = x.size();
    if (m == 0) throw dim_error("scan_sequential: empty input sequence");
    if (n_state == 0) throw dim_error("scan_sequential: n_state must be >= 1");
    detail::check_step_param(a_bar, m, n_state, "a_bar");
    detail::check_step_param(b_bar, m, n_state, "b_bar");
    detail::check_step_param(c, m, n_state, "c");
    if (!h0.empty() && h0.size() != n_state)
        throw dim_error("scan_sequential: h0 length mismatch");

    std::vector<T> h(n_state, T(0));
    if (!h0.empty()) h.assign(h0.begin(), h0.end());

    std::vector<T> y(m);
    for (size_t t = 0; t < m; ++t) {
        const T* at = detail::step_row(a_bar, t, n_state);
        const T* bt = detail::step_row(b_bar, t, n_state);
        const T* ct = detail::step_row(c, t, n_state);
        T yt = T(0);
        for (size_t i = 0; i < n_state; ++i) {
            h[i] = at[i] * h[i] + bt[i] * x[t];
            yt += ct[i] * h[i];
        }
        y[t] = yt;
    }
    return y;
}

template <typename T>
std::vector<T> scan_sequential(const DiscreteSsm<T>& d, const ScanSequence<T>& seq) {
    return scan_sequential<T>(d.a_bar.size(), d.a_bar, d.b_bar, d.c, seq.x, seq.h0);
}

// K = (C B_bar, C A_bar B_bar, ..., C A_bar^{m-1} B_bar) for time-invariant
// parameters; causal convolution with K reproduces the zero-state scan.
template <typename T>
std::vector<T> conv_kernel(const DiscreteSsm<T>& d, size_t m) {
    if (m < 1) throw dim_error("conv_kernel: m must be >= 1");
    const size_t n = d.a_bar.size();
    if (n == 0 || d.b_bar.size() != n || d.c.size() != n)
        throw dim_error("conv_kernel: inconsistent state dimensions");

    std::vector<T> k(m, T(0));
    std::vector<T> pw(d.b_bar.begin(), d.b_bar.end()); // A_bar^j * B_bar
    for (size_t j = 0; j < m; ++j) {
        T kj = T(0);
        for (size_t i = 0; i < n; ++i) kj += d.c[i] * pw[i];
        k[j] = kj;
        if (j + 1 < m)
            for (size_t i = 0; i < n; ++i) pw[i] *= d.a_bar[i];
    }
    return k;
}

// y_t = sum_{j<=t} k_j x_{t-j}
template <typename T>
std::vector<T> causal_convolve(std::span<const T> k, std::span<const T> x) {
    std::vector<T> y(x.size(), T(0));
    for (size_t t = 0; t < x.size(); ++t) {
        T acc = T(0);
        const size_t jmax = std::min(t + 1, k.size());
        for (size_t j = 0; j < jmax; ++j) acc += k[j] * x[t - j];
        y[t] = acc;
    }
    return y;
}

// ---- differentiable single-channel scan over continuous parameters -------
// Composite of ZOH discretization and the sequential scan, exposed with an
// analytic adjoint so whole parameter sets (a, b, c, delta, x, h0) can be
// gradient-checked. b, c may be per-step (m*n) or broadcast (n); delta may
// be per-step (m) or broadcast (1).

template <typename T>
void scan_zoh_forward(size_t n, std::span<const T> a, std::span<const T> b,
                      std::span<const T> c, std::span<const T> delta,
                      std::span<const T> x, std::span<const T> h0,
                      std::span<T> y, std::span<T> h_cache) {
    const size_t m = x.size();
    if (m == 0) throw dim_error("scan_zoh: empty input");
    detail::check_step_param(b, m, n, "b");
    detail::check_step_param(c, m, n, "c");
    if (delta.size() != 1 && delta.size() != m)
        throw dim_error("scan_zoh: delta must have length 1 or m");
    if (y.size() != m || h_cache.size() != m * n)
        throw dim_error("scan_zoh: output buffer size mismatch");

    std::vector<T> h(n, T(0));
    if (!h0.empty()) h.assign(h0.begin(), h0.end());
    for (size_t t = 0; t < m; ++t) {
        const T dt = delta.size() == 1 ? delta[0] : delta[t];
        const T* bt = detail::step_row(b, t, n);
        const T* ct = detail::step_row(c, t, n);
        T yt = T(0);
        for (size_t i = 0; i < n; ++i) {
            T ab, f;
            zoh_factors(dt * a[i], ab, f);
            h[i] = ab * h[i] + f * dt * bt[i] * x[t];
            h_cache[t * n + i] = h[i];
            yt += ct[i] * h[i];
        }
        y[t] = yt;
    }
}

// Accumulates into the d* buffers; they must be pre-sized to match the
// corresponding forward spans (broadcast parameters get summed gradients).
template <typename T>
void scan_zoh_backward(size_t n, std::span<const T> a, std::span<const T> b,
                       std::span<const T> c, std::span<const T> delta,
                       std::span<const T> x, std::span<const T> h0,
                       std::span<const T> h_cache, std::span<const T> dy,
                       std::span<T> da, std::span<T> db, std::span<T> dc,
                       std::span<T> ddelta, std::span<T> dx, std::span<T> dh0) {
    const size_t m = x.size();
    std::vector<T> dh(n, T(0));
    for (size_t t = m; t-- > 0;) {
        const T dt = delta.size() == 1 ? delta[0] : delta[t];
        const T* bt = detail::step_row(b, t, n);
        const T* ct = detail::step_row(c, t, n);
        T* dbt = db.size() == n ? db.data() : db.data() + t * n;
        T* dct = dc.size() == n ? dc.data() : dc.data() + t * n;
        T& ddt = ddelta.size() == 1 ? ddelta[0] : ddelta[t];
        const T gy = dy[t];
        T dx_acc = T(0);
        for (size_t i = 0; i < n; ++i) {
            const T ht = h_cache[t * n + i];
            const T hprev = t > 0 ? h_cache[(t - 1) * n + i]
                                  : (h0.empty() ? T(0) : h0[i]);
            dh[i] += ct[i] * gy;
            dct[i] += ht * gy;

            T ab, f;
            const T u = dt * a[i];
            zoh_factors(u, ab, f);
            const T fp = zoh_f_grad(u, ab);
            const T bb = f * dt * bt[i];

            const T dab = dh[i] * hprev;
            const T dbb = dh[i] * x[t];
            dx_acc += bb * dh[i];
            dbt[i] += dbb * f * dt;
            da[i] += dab * dt * ab + dbb * fp * dt * dt * bt[i];
            ddt += dab * a[i] * ab + dbb * (fp * a[i] * dt * bt[i] + f * bt[i]);
            dh[i] *= ab;
        }
        dx[t] += dx_acc;
    }
    if (!dh0.empty())
        for (size_t i = 0; i < n; ++i) dh0[i] += dh[i];
}

// ---- multi-channel selective scan -----------------------------------------
// Per token t and channel d, with shared per-token b_t, c_t (length n) and a
// per-channel timescale dt[t][d] already pushed through the positivity map:
//   h_t[d][i] = exp(dt*a[d][i]) h_{t-1}[d][i] + f(dt*a[d][i]) dt b_t[i] x_t[d]
//   y_t[d]    = <c_t, h_t[d]>
// Channels are independent, which is the parallel axis.

template <typename T>
void selective_scan_core(int m, int e, int n, const T* x, const T* dt,
                         const T* bmat, const T* cmat, const T* a, T* y,
                         T* h_cache, bool parallel) {
#pragma omp parallel if (parallel)
    {
        std::vector<T> h(static_cast<size_t>(n));
#pragma omp for schedule(static)
        for (int d = 0; d < e; ++d) {
            std::fill(h.begin(), h.end(), T(0));
            const T* ad = a + static_cast<int64_t>(d) * n;
            for (int t = 0; t < m; ++t) {
                const T xv = x[static_cast<int64_t>(t) * e + d];
                const T dtv = dt[static_cast<int64_t>(t) * e + d];
                const T* bt = bmat + static_cast<int64_t>(t) * n;
                const T* ct = cmat + static_cast<int64_t>(t) * n;
                T* hc = h_cache + (static_cast<int64_t>(t) * e + d) * n;
                T yt = T(0);
                for (int i = 0; i < n; ++i) {
                    T ab, f;
                    zoh_factors(dtv * ad[i], ab, f);
                    h[static_cast<size_t>(i)] = ab * h[static_cast<size_t>(i)] + f * dtv * bt[i] * xv;
                    hc[i] = h[static_cast<size_t>(i)];
                    yt += ct[i] * h[static_cast<size_t>(i)];
                }
                y[static_cast<int64_t>(t) * e + d] = yt;
            }
        }
    }
}

// Backward of selective_scan_core. Accumulates into dx and da; ddt (w.r.t.
// the post-softplus dt), db and dc are overwritten outputs. Channel-disjoint
// gradients are written in a channel-parallel phase; the cross-channel
// reductions for db/dc run in a second token-parallel phase so arithmetic
// order (and therefore the result bit pattern) never depends on the thread
// count. scratch must hold m*e*n elements.
template <typename T>
void selective_scan_core_backward(int m, int e, int n, const T* x, const T* dt,
                                  const T* bmat, const T* cmat, const T* a,
                                  const T* h_cache, const T* dy, T* dx, T* ddt,
                                  T* db, T* dc, T* da, T* scratch, bool parallel) {
#pragma omp parallel if (parallel)
    {
        std::vector<T> dh(static_cast<size_t>(n));
#pragma omp for schedule(static)
        for (int d = 0; d < e; ++d) {
            std::fill(dh.begin(), dh.end(), T(0));
            const T* ad = a + static_cast<int64_t>(d) * n;
            T* dad = da + static_cast<int64_t>(d) * n;
            for (int t = m - 1; t >= 0; --t) {
                const int64_t td = static_cast<int64_t>(t) * e + d;
                const T xv = x[td];
                const T dtv = dt[td];
                const T gy = dy[td];
                const T* bt = bmat + static_cast<int64_t>(t) * n;
                const T* ct = cmat + static_cast<int64_t>(t) * n;
                const T* hp = t > 0 ? h_cache + (td - e) * n : nullptr;
                T* sc = scratch + td * n;
                T dx_acc = T(0);
                T ddt_acc = T(0);
                for (int i = 0; i < n; ++i) {
                    T& dhi = dh[static_cast<size_t>(i)];
                    dhi += ct[i] * gy;
                    const T hprev = hp ? hp[i] : T(0);
                    const T u = dtv * ad[i];
                    T ab, f, fp;
                    ab = fast_exp(u);
                    if (std::abs(u) < T(kZohTaylorCutoff)) {
                        f = T(1);
                        fp = T(0.5);
                    } else {
                        const T inv_u = T(1) / u;
                        f = (ab - T(1)) * inv_u;
                        fp = (u * ab - ab + T(1)) * inv_u * inv_u;
                    }
                    const T bb = f * dtv * bt[i];
                    const T dab = dhi * hprev;
                    const T dbb = dhi * xv;
                    dx_acc += bb * dhi;
                    sc[i] = dbb * f * dtv; // contribution to db[t][i]
                    dad[i] += dab * dtv * ab + dbb * fp * dtv * dtv * bt[i];
                    ddt_acc += dab * ad[i] * ab + dbb * (fp * ad[i] * dtv * bt[i] + f * bt[i]);
                    dhi *= ab;
                }
                dx[td] += dx_acc;
                ddt[td] = ddt_acc;
            }
        }
    }

#pragma omp parallel for schedule(static) if (parallel)
    for (int t = 0; t < m; ++t) {
        T* dbt = db + static_cast<int64_t>(t) * n;
        T* dct = dc + static_cast<int64_t>(t) * n;
        for (int i = 0; i < n; ++i) {
            dbt[i] = T(0);
            dct[i] = T(0);
        }
        for (int d = 0; d < e; ++d) {
            const int64_t td = static_cast<int64_t>(t) * e + d;
            const T gy = dy[td];
            const T* sc = scratch + td * n;
            const T* hc = h_cache + td * n;
            for (int i = 0; i < n; ++i) {
                dbt[i] += sc[i];
                dct[i] += hc[i] * gy;
            }
        }
    }
}

// Learned per-token parameter maps for the selective scan. All matrices
// row-major; `a` is the continuous diagonal evolution per channel.
template <typename T>
struct SelectiveParams {
    const T* wb;  // e x n
    const T* wc;  // e x n
    const T* wdt; // e x e
    const T* bdt; // e
    const T* a;   // e x n
};

template <typename T>
struct SelectiveGrads {
    T* wb;
    T* wc;
    T* wdt;
    T* bdt;
    T* a;
};

// All fields are fully overwritten by the forward pass, so resizing does
// not zero them.
template <typename T>
struct SelectiveCache {
    std::vector<T> bmat;   // m x n
    std::vector<T> cmat;   // m x n
    std::vector<T> dt_pre; // m x e
    std::vector<T> dt;     // m x e
    std::vector<T> h;      // m x e x n

    void resize(int m, int e, int n) {
        bmat.resize(static_cast<size_t>(m) * n);
        cmat.resize(static_cast<size_t>(m) * n);
        dt_pre.resize(static_cast<size_t>(m) * e);
        dt.resize(static_cast<size_t>(m) * e);
        h.resize(static_cast<size_t>(m) * e * n);
    }
};

// x: m x e token sequence. Produces y (m x e) and fills the cache needed by
// the backward pass. Throws numeric_error naming the first bad token if a
// non-finite value appears.
template <typename T>
void selective_scan(int m, int e, int n, const T* x, const SelectiveParams<T>& p,
                    T* y, SelectiveCache<T>& cache, bool parallel = false) {
    if (m < 1) throw dim_error("selective_scan: sequence length must be >= 1");
    cache.resize(m, e, n);
    matmul(x, p.wb, cache.bmat.data(), m, e, n);
    matmul(x, p.wc, cache.cmat.data(), m, e, n);
    matmul(x, p.wdt, cache.dt_pre.data(), m, e, e);
    for (int t = 0; t < m; ++t) {
        T* row = cache.dt_pre.data() + static_cast<int64_t>(t) * e;
        T* out = cache.dt.data() + static_cast<int64_t>(t) * e;
        for (int d = 0; d < e; ++d) {
            row[d] += p.bdt[d];
            out[d] = softplus(row[d]);
        }
    }
    selective_scan_core(m, e, n, x, cache.dt.data(), cache.bmat.data(),
                        cache.cmat.data(), p.a, y, cache.h.data(), parallel);
    for (int t = 0; t < m; ++t) {
        if (!all_finite<T>({y + static_cast<int64_t>(t) * e, static_cast<size_t>(e)}))
            throw numeric_error("selective_scan: non-finite value at token " + std::to_string(t));
    }
}

// Workspace for the backward pass; all fields are overwritten, resizing
// does not zero them.
template <typename T>
struct SelectiveBackwardScratch {
    std::vector<T> db, dc, ddt, dp, dbc;

    void resize(int m, int e, int n) {
        db.resize(static_cast<size_t>(m) * n);
        dc.resize(static_cast<size_t>(m) * n);
        ddt.resize(static_cast<size_t>(m) * e);
        dp.resize(static_cast<size_t>(m) * e);
        dbc.resize(static_cast<size_t>(m) * e * n);
    }
};

// Accumulates parameter gradients into g and the input gradient into dx.
template <typename T>
void selective_scan_backward(int m, int e, int n, const T* x,
                             const SelectiveParams<T>& p,
                             const SelectiveCache<T>& cache, const T* dy,
                             const SelectiveGrads<T>& g, T* dx,
                             SelectiveBackwardScratch<T>& s, bool parallel = false) {
    s.resize(m, e, n);
    selective_scan_core_backward(m, e, n, x, cache.dt.data(), cache.bmat.data(),
                                 cache.cmat.data(), p.a, cache.h.data(), dy, dx,
                                 s.ddt.data(), s.db.data(), s.dc.data(), g.a,
                                 s.dbc.data(), parallel);
    // dt = softplus(dt_pre)
    const size_t me = static_cast<size_t>(m) * e;
    for (size_t i = 0; i < me; ++i) s.dp[i] = s.ddt[i] * sigmoid(cache.dt_pre[i]);

    matmul_nt_acc(s.dp.data(), p.wdt, dx, m, e, e);
    matmul_tn_acc(x, s.dp.data(), g.wdt, m, e, e);
    for (int t = 0; t < m; ++t) {
        const T* row = s.dp.data() + static_cast<int64_t>(t) * e;
        for (int d = 0; d < e; ++d) g.bdt[d] += row[d];
    }
    matmul_nt_acc(s.db.data(), p.wb, dx, m, n, e);
    matmul_tn_acc(x, s.db.data(), g.wb, m, e, n);
    matmul_nt_acc(s.dc.data(), p.wc, dx, m, n, e);
    matmul_tn_acc(x, s.dc.data(), g.wc, m, e, n);
}

} // namespace vsslab::ssm
