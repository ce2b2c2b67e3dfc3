// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "vsslab/common.hpp"

namespace vsslab::ssm {

// One differentiable input block: live storage the loss closure reads, plus
// the analytic gradient to compare against.
struct GradCheckInput {
    std::span<double> values;
    std::span<const double> analytic;
};

// Central-difference check. Perturbs each scalar in place, re-evaluates the
// loss, and returns max_i |g_analytic - g_fd| / max(1, |g_fd|).
inline double grad_check(const std::function<double()>& loss,
                         std::span<const GradCheckInput> inputs,
                         double eps = 1e-5) {
    if (!(eps >= 1e-6 && eps <= 1e-3))
        throw config_error("grad_check: eps must be in [1e-6, 1e-3]");
    double max_err = 0.0;
    for (const auto& in : inputs) {
        if (in.values.size() != in.analytic.size())
            throw dim_error("grad_check: gradient size mismatch");
        for (size_t i = 0; i < in.values.size(); ++i) {
            const double saved = in.values[i];
            in.values[i] = saved + eps;
            const double lp = loss();
            in.values[i] = saved - eps;
            const double lm = loss();
            in.values[i] = saved;
            const double fd = (lp - lm) / (2.0 * eps);
            const double ga = in.analytic[i];
            if (!std::isfinite(fd) || !std::isfinite(ga))
                throw numeric_error("grad_check: non-finite gradient");
            const double err = std::abs(ga - fd) / std::max(1.0, std::abs(fd));
            if (err > max_err) max_err = err;
        }
    }
    return max_err;
}

} // namespace vsslab::ssm
