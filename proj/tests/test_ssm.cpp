// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vsslab/gradcheck.hpp"
#include "vsslab/ssm.hpp"

using namespace vsslab;
using ssm::ContinuousSsm;
using ssm::DiscreteSsm;
using ssm::ScanSequence;

TEST_SUITE("ssm") {

TEST_CASE("zoh closed forms") {
    // A=1, B=5, delta=ln 2: a_bar = 2 and b_bar = (ln2)^-1 (2-1) ln2 * 5 = 5
    {
        ContinuousSsm<double> s{{1.0}, {5.0}, {1.0}};
        const auto d = ssm::zoh_discretize(s, std::log(2.0));
        CHECK(std::abs(d.a_bar[0] - 2.0) < 1e-12);
        CHECK(std::abs(d.b_bar[0] - 5.0) < 1e-12);
    }
    // A=-1, B=1, delta=1: a_bar = e^-1, b_bar = 1 - e^-1
    {
        ContinuousSsm<double> s{{-1.0}, {1.0}, {1.0}};
        const auto d = ssm::zoh_discretize(s, 1.0);
        CHECK(std::abs(d.a_bar[0] - std::exp(-1.0)) < 1e-12);
        CHECK(std::abs(d.b_bar[0] - (1.0 - std::exp(-1.0))) < 1e-12);
    }
    // delta -> 0: a_bar -> 1, taylor branch gives b_bar = delta * b exactly
    {
        ContinuousSsm<double> s{{-1.0}, {1.0}, {1.0}};
        const auto d = ssm::zoh_discretize(s, 1e-12);
        CHECK(std::abs(d.a_bar[0] - 1.0) < 1e-11);
        CHECK(d.b_bar[0] == 1e-12);
    }
}

TEST_CASE("zoh taylor branch agrees with the exact branch near zero") {
    // |delta*a| = 1e-6 uses the exact formula; compare against delta*b
    const double delta = 1e-6;
    ContinuousSsm<double> s{{-1.0}, {2.0}, {1.0}};
    const auto d = ssm::zoh_discretize(s, delta);
    const double taylor = delta * 2.0;
    CHECK(std::abs(d.b_bar[0] - taylor) / taylor < 1e-6);

    // invariant: at delta = 1e-8 A_bar is identity-like and B_bar = delta*B
    const auto d8 = ssm::zoh_discretize(s, 1e-8);
    CHECK(std::abs(d8.a_bar[0] - 1.0) < 2e-8);
    CHECK(std::abs(d8.b_bar[0] - 1e-8 * 2.0) / (1e-8 * 2.0) < 1e-6);
}

TEST_CASE("zoh domain errors") {
    ContinuousSsm<double> s{{-1.0}, {1.0}, {1.0}};
    CHECK_THROWS_AS(ssm::zoh_discretize(s, 0.0), config_error);
    CHECK_THROWS_AS(ssm::zoh_discretize(s, -1.0), config_error);
    CHECK_THROWS_AS(ssm::zoh_discretize(s, std::nan("")), config_error);
    ContinuousSsm<double> bad{{std::nan("")}, {1.0}, {1.0}};
    CHECK_THROWS_AS(ssm::zoh_discretize(bad, 1.0), config_error);
    ContinuousSsm<double> mis{{1.0, 2.0}, {1.0}, {1.0}};
    CHECK_THROWS_AS(ssm::zoh_discretize(mis, 1.0), dim_error);
}

TEST_CASE("scan_sequential hand recurrence") {
    DiscreteSsm<double> d{{0.5}, {1.0}, {1.0}, 1.0};
    const auto y = ssm::scan_sequential(d, ScanSequence<double>{{1.0, 0.0, 0.0}, {}});
    REQUIRE(y.size() == 3);
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y[2] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("scan_sequential zero input and single step") {
    DiscreteSsm<double> d{{0.7, -0.3}, {1.0, 2.0}, {0.5, -1.0}, 1.0};
    const auto zeros = ssm::scan_sequential(d, ScanSequence<double>{{0.0, 0.0, 0.0, 0.0}, {}});
    for (double v : zeros) CHECK(v == 0.0);

    // m=1 with nonzero h0: y = <c, a_bar.h0 + b_bar*x>
    const double x1 = 1.5;
    ScanSequence<double> seq{{x1}, {2.0, -1.0}};
    const auto y = ssm::scan_sequential(d, seq);
    const double expect = 0.5 * (0.7 * 2.0 + 1.0 * x1) + (-1.0) * (-0.3 * -1.0 + 2.0 * x1);
    CHECK(y[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("scan_sequential length checks") {
    DiscreteSsm<double> d{{0.5, 0.1}, {1.0, 1.0}, {1.0, 1.0}, 1.0};
    ScanSequence<double> seq{{1.0, 2.0, 3.0}, {}};
    // per-step parameters of the wrong length
    std::vector<double> bad(4, 0.5); // neither n nor m*n for n=2, m=3
    CHECK_THROWS_AS(ssm::scan_sequential<double>(2, bad, d.b_bar, d.c, seq.x, seq.h0), dim_error);
    std::vector<double> empty;
    CHECK_THROWS_AS(ssm::scan_sequential(d, ScanSequence<double>{{}, {}}), dim_error);
    CHECK_THROWS_AS(ssm::scan_sequential<double>(2, d.a_bar, d.b_bar, d.c, seq.x,
                                                 std::vector<double>{1.0, 2.0, 3.0}),
                    dim_error);
}

TEST_CASE("scan linearity for fixed parameters") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 1 + static_cast<int>(rng() % 4);
        const int m = 1 + static_cast<int>(rng() % 12);
        DiscreteSsm<double> d;
        d.delta = 1.0;
        for (int i = 0; i < n; ++i) {
            d.a_bar.push_back(unit(rng));
            d.b_bar.push_back(unit(rng));
            d.c.push_back(unit(rng));
        }
        std::vector<double> x1(static_cast<size_t>(m)), x2(static_cast<size_t>(m));
        for (auto& v : x1) v = unit(rng);
        for (auto& v : x2) v = unit(rng);
        const double al = unit(rng), be = unit(rng);
        std::vector<double> mix(static_cast<size_t>(m));
        for (int t = 0; t < m; ++t)
            mix[static_cast<size_t>(t)] =
                al * x1[static_cast<size_t>(t)] + be * x2[static_cast<size_t>(t)];
        const auto ym = ssm::scan_sequential(d, {mix, {}});
        const auto y1 = ssm::scan_sequential(d, {x1, {}});
        const auto y2 = ssm::scan_sequential(d, {x2, {}});
        for (int t = 0; t < m; ++t)
            CHECK(std::abs(ym[static_cast<size_t>(t)] - (al * y1[static_cast<size_t>(t)] +
                                                         be * y2[static_cast<size_t>(t)])) <
                  1e-10);
    }
}

TEST_CASE("conv_kernel hand expansion and memoryless case") {
    DiscreteSsm<double> d{{0.5}, {1.0}, {1.0}, 1.0};
    const auto k = ssm::conv_kernel(d, 3);
    REQUIRE(k.size() == 3);
    CHECK(k[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(k[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(k[2] == doctest::Approx(0.25).epsilon(1e-12));

    DiscreteSsm<double> mem0{{0.0, 0.0}, {2.0, -1.0}, {3.0, 4.0}, 1.0};
    const auto k0 = ssm::conv_kernel(mem0, 3);
    CHECK(k0[0] == doctest::Approx(2.0 * 3.0 - 1.0 * 4.0).epsilon(1e-12));
    CHECK(k0[1] == 0.0);
    CHECK(k0[2] == 0.0);

    CHECK_THROWS_AS(ssm::conv_kernel(d, 0), dim_error);
}

TEST_CASE("kernel/scan equivalence on random instances") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
        const int n = 1 + static_cast<int>(rng() % 16);
        const int m = 1 + static_cast<int>(rng() % 64);
        DiscreteSsm<double> d;
        d.delta = 1.0;
        for (int i = 0; i < n; ++i) {
            d.a_bar.push_back(unit(rng)); // |a_bar| <= 1
            d.b_bar.push_back(2.0 * unit(rng));
            d.c.push_back(2.0 * unit(rng));
        }
        std::vector<double> x(static_cast<size_t>(m));
        for (auto& v : x) v = 2.0 * unit(rng);

        const auto k = ssm::conv_kernel(d, static_cast<size_t>(m));
        const auto via_conv = ssm::causal_convolve<double>(k, x);
        const auto via_scan = ssm::scan_sequential(d, {x, {}});
        for (int t = 0; t < m; ++t) {
            const double ref = via_scan[static_cast<size_t>(t)];
            CHECK(std::abs(via_conv[static_cast<size_t>(t)] - ref) <=
                  1e-6 * std::max(1.0, std::abs(ref)));
        }
    }
}

TEST_CASE("selective scan with constant projections reduces to scan_sequential") {
    const int m = 7, e = 3, n = 4;
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> x(static_cast<size_t>(m) * e), bmat(static_cast<size_t>(m) * n),
        cmat(static_cast<size_t>(m) * n), dt(static_cast<size_t>(m) * e),
        a(static_cast<size_t>(e) * n);
    std::vector<double> brow(static_cast<size_t>(n)), crow(static_cast<size_t>(n));
    for (auto& v : brow) v = unit(rng);
    for (auto& v : crow) v = unit(rng);
    for (auto& v : x) v = unit(rng);
    for (auto& v : a) v = -0.2 - 0.8 * std::abs(unit(rng));
    const double dt_const = 0.37;
    for (int t = 0; t < m; ++t) {
        for (int i = 0; i < n; ++i) {
            bmat[static_cast<size_t>(t) * n + i] = brow[static_cast<size_t>(i)];
            cmat[static_cast<size_t>(t) * n + i] = crow[static_cast<size_t>(i)];
        }
        for (int d = 0; d < e; ++d) dt[static_cast<size_t>(t) * e + d] = dt_const;
    }
    std::vector<double> y(static_cast<size_t>(m) * e), h(static_cast<size_t>(m) * e * n);
    ssm::selective_scan_core(m, e, n, x.data(), dt.data(), bmat.data(), cmat.data(), a.data(),
                             y.data(), h.data(), false);

    for (int d = 0; d < e; ++d) {
        ContinuousSsm<double> cs;
        for (int i = 0; i < n; ++i) {
            cs.a.push_back(a[static_cast<size_t>(d) * n + i]);
            cs.b.push_back(brow[static_cast<size_t>(i)]);
            cs.c.push_back(crow[static_cast<size_t>(i)]);
        }
        const auto disc = ssm::zoh_discretize(cs, dt_const);
        std::vector<double> xc(static_cast<size_t>(m));
        for (int t = 0; t < m; ++t) xc[static_cast<size_t>(t)] = x[static_cast<size_t>(t) * e + d];
        const auto yc = ssm::scan_sequential(disc, {xc, {}});
        for (int t = 0; t < m; ++t)
            CHECK(std::abs(y[static_cast<size_t>(t) * e + d] - yc[static_cast<size_t>(t)]) < 1e-12);
    }
}

TEST_CASE("selective scan single token closed form") {
    const int m = 1, e = 2, n = 3;
    std::vector<double> x{0.3, -1.2};
    std::vector<double> bmat{0.5, -0.4, 0.9};
    std::vector<double> cmat{1.0, 2.0, -1.0};
    std::vector<double> dt{0.1, 0.05};
    std::vector<double> a{-1.0, -2.0, -0.5, -1.5, -0.7, -3.0};
    std::vector<double> y(static_cast<size_t>(m) * e), h(static_cast<size_t>(m) * e * n);
    ssm::selective_scan_core(m, e, n, x.data(), dt.data(), bmat.data(), cmat.data(), a.data(),
                             y.data(), h.data(), false);
    for (int d = 0; d < e; ++d) {
        double expect = 0.0;
        for (int i = 0; i < n; ++i) {
            const double u = dt[static_cast<size_t>(d)] * a[static_cast<size_t>(d) * n + i];
            const double bbar =
                (std::exp(u) - 1.0) / u * dt[static_cast<size_t>(d)] * bmat[static_cast<size_t>(i)];
            expect += cmat[static_cast<size_t>(i)] * bbar * x[static_cast<size_t>(d)];
        }
        CHECK(y[static_cast<size_t>(d)] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("selective scan matches the naive per-step oracle") {
    const int m = 8, e = 4, n = 4;
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> x(static_cast<size_t>(m) * e), wb(static_cast<size_t>(e) * n),
        wc(static_cast<size_t>(e) * n), wdt(static_cast<size_t>(e) * e),
        bdt(static_cast<size_t>(e)), a(static_cast<size_t>(e) * n);
    for (auto& v : x) v = unit(rng);
    for (auto& v : wb) v = 0.5 * unit(rng);
    for (auto& v : wc) v = 0.5 * unit(rng);
    for (auto& v : wdt) v = 0.2 * unit(rng);
    for (auto& v : bdt) v = -2.0 + unit(rng);
    for (auto& v : a) v = -0.2 - 2.0 * std::abs(unit(rng));

    ssm::SelectiveParams<double> p{wb.data(), wc.data(), wdt.data(), bdt.data(), a.data()};
    ssm::SelectiveCache<double> cache;
    std::vector<double> y(static_cast<size_t>(m) * e);
    ssm::selective_scan(m, e, n, x.data(), p, y.data(), cache, false);

    const auto ref = oracles::naive_selective_scan(m, e, n, x, wb, wc, wdt, bdt, a);
    for (size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-10);

    // parallel kernel produces the same bits
    ssm::SelectiveCache<double> cache2;
    std::vector<double> y2(y.size());
    ssm::selective_scan(m, e, n, x.data(), p, y2.data(), cache2, true);
    for (size_t i = 0; i < y.size(); ++i) CHECK(y[i] == y2[i]);
}

TEST_CASE("selective scan reports the failing token") {
    const int m = 3, e = 1, n = 1;
    std::vector<double> x{1.0, 1.0, 1.0};
    std::vector<double> wb{1.0}, wc{1.0}, wdt{0.0}, bdt{700.0}; // softplus -> 700
    std::vector<double> a{300.0}; // exp(700*300) overflows
    ssm::SelectiveParams<double> p{wb.data(), wc.data(), wdt.data(), bdt.data(), a.data()};
    ssm::SelectiveCache<double> cache;
    std::vector<double> y(static_cast<size_t>(m) * e);
    try {
        ssm::selective_scan(m, e, n, x.data(), p, y.data(), cache, false);
        FAIL("expected numeric_error");
    } catch (const numeric_error& ex) {
        CHECK(std::string(ex.what()).find("token") != std::string::npos);
    }
}

TEST_CASE("grad_check on identity-sum is exact") {
    std::vector<double> v{0.3, -1.0, 2.5, 0.0};
    std::vector<double> ones(v.size(), 1.0);
    auto loss = [&] {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    };
    ssm::GradCheckInput in{{v.data(), v.size()}, {ones.data(), ones.size()}};
    const double err = ssm::grad_check(loss, {&in, 1}, 1e-5);
    CHECK(err < 1e-9);
}

TEST_CASE("grad_check rejects bad eps") {
    std::vector<double> v{1.0};
    std::vector<double> g{1.0};
    ssm::GradCheckInput in{{v.data(), v.size()}, {g.data(), g.size()}};
    auto loss = [&] { return v[0]; };
    CHECK_THROWS_AS(ssm::grad_check(loss, {&in, 1}, 1e-2), config_error);
    CHECK_THROWS_AS(ssm::grad_check(loss, {&in, 1}, 1e-7), config_error);
}

TEST_CASE("scan with zoh gradients match finite differences") {
    const int m = 6, n = 4;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> a(static_cast<size_t>(n)), b(static_cast<size_t>(n)),
        c(static_cast<size_t>(n)), delta{0.4}, x(static_cast<size_t>(m));
    for (auto& v : a) v = -0.3 - std::abs(unit(rng));
    for (auto& v : b) v = unit(rng);
    for (auto& v : c) v = unit(rng);
    for (auto& v : x) v = unit(rng);

    std::vector<double> y(static_cast<size_t>(m)), h(static_cast<size_t>(m) * n);
    auto forward = [&] {
        ssm::scan_zoh_forward<double>(n, a, b, c, delta, x, {}, y, h);
        double l = 0.0;
        for (double v : y) l += v * v;
        return l;
    };

    forward();
    std::vector<double> dy(static_cast<size_t>(m));
    for (int t = 0; t < m; ++t) dy[static_cast<size_t>(t)] = 2.0 * y[static_cast<size_t>(t)];
    std::vector<double> da(a.size(), 0.0), db(b.size(), 0.0), dc(c.size(), 0.0),
        ddelta(1, 0.0), dx(x.size(), 0.0);
    ssm::scan_zoh_backward<double>(n, a, b, c, delta, x, {}, h, dy, da, db, dc, ddelta, dx, {});

    ssm::GradCheckInput ins[] = {
        {{a.data(), a.size()}, {da.data(), da.size()}},
        {{b.data(), b.size()}, {db.data(), db.size()}},
        {{c.data(), c.size()}, {dc.data(), dc.size()}},
        {{delta.data(), delta.size()}, {ddelta.data(), ddelta.size()}},
        {{x.data(), x.size()}, {dx.data(), dx.size()}},
    };
    const double err = ssm::grad_check(forward, {ins, 5}, 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("selective scan gradients match finite differences") {
    const int m = 8, e = 4, n = 4;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> x(static_cast<size_t>(m) * e), wb(static_cast<size_t>(e) * n),
        wc(static_cast<size_t>(e) * n), wdt(static_cast<size_t>(e) * e),
        bdt(static_cast<size_t>(e)), a(static_cast<size_t>(e) * n);
    for (auto& v : x) v = unit(rng);
    for (auto& v : wb) v = 0.5 * unit(rng);
    for (auto& v : wc) v = 0.5 * unit(rng);
    for (auto& v : wdt) v = 0.2 * unit(rng);
    for (auto& v : bdt) v = -1.5 + unit(rng);
    for (auto& v : a) v = -0.2 - 2.0 * std::abs(unit(rng));

    ssm::SelectiveParams<double> p{wb.data(), wc.data(), wdt.data(), bdt.data(), a.data()};
    ssm::SelectiveCache<double> cache;
    std::vector<double> y(static_cast<size_t>(m) * e);
    auto forward = [&] {
        ssm::selective_scan(m, e, n, x.data(), p, y.data(), cache, false);
        double l = 0.0;
        for (double v : y) l += v * v;
        return l;
    };
    forward();
    std::vector<double> dy(y.size());
    for (size_t i = 0; i < y.size(); ++i) dy[i] = 2.0 * y[i];
    std::vector<double> dwb(wb.size(), 0.0), dwc(wc.size(), 0.0), dwdt(wdt.size(), 0.0),
        dbdt(bdt.size(), 0.0), da(a.size(), 0.0), dx(x.size(), 0.0);
    ssm::SelectiveGrads<double> g{dwb.data(), dwc.data(), dwdt.data(), dbdt.data(), da.data()};
    ssm::SelectiveBackwardScratch<double> scratch;
    ssm::selective_scan_backward(m, e, n, x.data(), p, cache, dy.data(), g, dx.data(), scratch,
                                 false);

    ssm::GradCheckInput ins[] = {
        {{wb.data(), wb.size()}, {dwb.data(), dwb.size()}},
        {{wc.data(), wc.size()}, {dwc.data(), dwc.size()}},
        {{wdt.data(), wdt.size()}, {dwdt.data(), dwdt.size()}},
        {{bdt.data(), bdt.size()}, {dbdt.data(), dbdt.size()}},
        {{a.data(), a.size()}, {da.data(), da.size()}},
        {{x.data(), x.size()}, {dx.data(), dx.size()}},
    };
    const double err = ssm::grad_check(forward, {ins, 6}, 1e-5);
    CHECK(err < 1e-4);
}

} // TEST_SUITE
