// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used only by tests. Deliberately
// written as literal loops, separate from the library kernels they check.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracles {

// Literal per-step selective scan: recompute projections and the ZOH update
// token by token, channel by channel.
inline std::vector<double> naive_selective_scan(
    int m, int e, int n, const std::vector<double>& x, const std::vector<double>& wb,
    const std::vector<double>& wc, const std::vector<double>& wdt,
    const std::vector<double>& bdt, const std::vector<double>& a) {
    std::vector<double> y(static_cast<size_t>(m) * e, 0.0);
    std::vector<double> h(static_cast<size_t>(e) * n, 0.0);
    for (int t = 0; t < m; ++t) {
        // projections for this token
        std::vector<double> bt(static_cast<size_t>(n), 0.0), ct(static_cast<size_t>(n), 0.0);
        std::vector<double> dt(static_cast<size_t>(e), 0.0);
        for (int i = 0; i < n; ++i)
            for (int q = 0; q < e; ++q) {
                bt[static_cast<size_t>(i)] +=
                    x[static_cast<size_t>(t) * e + q] * wb[static_cast<size_t>(q) * n + i];
                ct[static_cast<size_t>(i)] +=
                    x[static_cast<size_t>(t) * e + q] * wc[static_cast<size_t>(q) * n + i];
            }
        for (int d = 0; d < e; ++d) {
            double p = bdt[static_cast<size_t>(d)];
            for (int q = 0; q < e; ++q)
                p += x[static_cast<size_t>(t) * e + q] * wdt[static_cast<size_t>(q) * e + d];
            dt[static_cast<size_t>(d)] = std::log1p(std::exp(p));
        }
        for (int d = 0; d < e; ++d) {
            double yt = 0.0;
            for (int i = 0; i < n; ++i) {
                const double u = dt[static_cast<size_t>(d)] * a[static_cast<size_t>(d) * n + i];
                const double abar = std::exp(u);
                const double bbar = std::abs(u) < 1e-8
                                        ? dt[static_cast<size_t>(d)] * bt[static_cast<size_t>(i)]
                                        : (abar - 1.0) / u * dt[static_cast<size_t>(d)] *
                                              bt[static_cast<size_t>(i)];
                double& hv = h[static_cast<size_t>(d) * n + i];
                hv = abar * hv + bbar * x[static_cast<size_t>(t) * e + d];
                yt += ct[static_cast<size_t>(i)] * hv;
            }
            y[static_cast<size_t>(t) * e + d] = yt;
        }
    }
    return y;
}

// Row-by-row token embedding: out[0] = cls + pos[0]; out[i+1] = patch_i *
// proj + pos[i+1].
inline std::vector<double> naive_embed(int n_patches, int plen, int d,
                                       const std::vector<double>& patches,
                                       const std::vector<double>& proj,
                                       const std::vector<double>& cls,
                                       const std::vector<double>& pos) {
    std::vector<double> out(static_cast<size_t>(n_patches + 1) * d, 0.0);
    for (int j = 0; j < d; ++j)
        out[static_cast<size_t>(j)] = cls[static_cast<size_t>(j)] + pos[static_cast<size_t>(j)];
    for (int i = 0; i < n_patches; ++i)
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int q = 0; q < plen; ++q)
                acc += patches[static_cast<size_t>(i) * plen + q] *
                       proj[static_cast<size_t>(q) * d + j];
            out[static_cast<size_t>(i + 1) * d + j] =
                acc + pos[static_cast<size_t>(i + 1) * d + j];
        }
    return out;
}

// log-sum-exp cross entropy, evaluated the slow direct way
inline double naive_cross_entropy(const std::vector<double>& logits, int label) {
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v);
    return std::log(lse) - logits[static_cast<size_t>(label)];
}

} // namespace oracles
