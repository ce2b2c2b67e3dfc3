// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Compares the serial reference kernels against the OpenMP variants and
// reports speedups. The parallel kernels are written so every output
// element is computed with the same arithmetic order as the serial path,
// so the comparison also asserts bitwise equality.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vsslab/data.hpp"
#include "vsslab/harness.hpp"
#include "vsslab/model.hpp"
#include "vsslab/ssm.hpp"

using namespace vsslab;

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

template <typename F>
double time_best(F&& fn, int reps = 3) {
    double best = 1e100;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_s();
        fn();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

void fill(std::vector<float>& v, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> d(lo, hi);
    for (auto& x : v) x = d(rng);
}

void bench_scan(int m, int e, int n) {
    std::mt19937_64 rng(42);
    std::vector<float> x(static_cast<size_t>(m) * e), dt(static_cast<size_t>(m) * e),
        b(static_cast<size_t>(m) * n), c(static_cast<size_t>(m) * n),
        a(static_cast<size_t>(e) * n);
    fill(x, rng);
    fill(dt, rng, 0.001f, 0.1f);
    fill(b, rng);
    fill(c, rng);
    fill(a, rng, -1.5f, -0.1f);

    std::vector<float> y_serial(x.size()), y_omp(x.size());
    std::vector<float> h(static_cast<size_t>(m) * e * n);
    const double ts = time_best([&] {
        ssm::selective_scan_core(m, e, n, x.data(), dt.data(), b.data(), c.data(), a.data(),
                                 y_serial.data(), h.data(), false);
    });
    const double tp = time_best([&] {
        ssm::selective_scan_core(m, e, n, x.data(), dt.data(), b.data(), c.data(), a.data(),
                                 y_omp.data(), h.data(), true);
    });
    const bool same = std::memcmp(y_serial.data(), y_omp.data(),
                                  y_serial.size() * sizeof(float)) == 0;

    // backward
    std::vector<float> dy(x.size());
    fill(dy, rng);
    std::vector<float> dx(x.size()), ddt(x.size()), db(b.size()), dc(c.size()), da(a.size());
    std::vector<float> scratch(h.size());
    auto zero_all = [&] {
        std::fill(dx.begin(), dx.end(), 0.0f);
        std::fill(ddt.begin(), ddt.end(), 0.0f);
        std::fill(db.begin(), db.end(), 0.0f);
        std::fill(dc.begin(), dc.end(), 0.0f);
        std::fill(da.begin(), da.end(), 0.0f);
    };
    const double bs = time_best([&] {
        zero_all();
        ssm::selective_scan_core_backward(m, e, n, x.data(), dt.data(), b.data(), c.data(),
                                          a.data(), h.data(), dy.data(), dx.data(), ddt.data(),
                                          db.data(), dc.data(), da.data(), scratch.data(), false);
    });
    std::vector<float> dx_ref = dx;
    const double bp = time_best([&] {
        zero_all();
        ssm::selective_scan_core_backward(m, e, n, x.data(), dt.data(), b.data(), c.data(),
                                          a.data(), h.data(), dy.data(), dx.data(), ddt.data(),
                                          db.data(), dc.data(), da.data(), scratch.data(), true);
    });
    const bool bsame = std::memcmp(dx_ref.data(), dx.data(), dx.size() * sizeof(float)) == 0;

    std::printf("scan fwd  m=%-4d e=%-4d n=%-3d  serial %8.3f ms  omp %8.3f ms  x%.2f  %s\n",
                m, e, n, ts * 1e3, tp * 1e3, ts / tp, same ? "bitwise-equal" : "MISMATCH");
    std::printf("scan bwd  m=%-4d e=%-4d n=%-3d  serial %8.3f ms  omp %8.3f ms  x%.2f  %s\n",
                m, e, n, bs * 1e3, bp * 1e3, bs / bp, bsame ? "bitwise-equal" : "MISMATCH");
}

void bench_model_eval(int batch) {
    models::ModelConfig cfg;
    cfg.family = models::Family::vss;
    cfg.depth = 2;
    cfg.dim = 64;
    cfg.state_dim = 8;
    cfg.patch = 4;
    const models::ModelState<float> model = models::make_model<float>(cfg);
    const Dataset ds = data::make_synthetic(batch, 10, 32, 32, 3, 3);

    int threads = 1;
#ifdef _OPENMP
    threads = omp_get_max_threads();
#endif
    const double t1 = time_best([&] {
#ifdef _OPENMP
        omp_set_num_threads(1);
#endif
        (void)harness::eval_acc(model, ds);
    });
    const double tn = time_best([&] {
#ifdef _OPENMP
        omp_set_num_threads(threads);
#endif
        (void)harness::eval_acc(model, ds);
    });
    std::printf("model fwd batch=%-4d       1 thr  %8.3f ms  %d thr %8.3f ms  x%.2f\n",
                batch, t1 * 1e3, threads, tn * 1e3, t1 / tn);
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP not enabled\n");
#endif
    bench_scan(65, 128, 8);
    bench_scan(197, 192, 16);
    bench_model_eval(256);
    return 0;
}
