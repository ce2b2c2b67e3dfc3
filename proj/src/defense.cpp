// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0

#include "vsslab/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vsslab::defenses {

const char* defense_kind_name(DefenseKind k) {
    switch (k) {
        case DefenseKind::none: return "none";
        case DefenseKind::patch_drop: return "patch_drop";
        case DefenseKind::patch_shuffle: return "patch_shuffle";
    }
    return "none";
}

DefenseKind defense_kind_from_name(const std::string& s) {
    if (s == "none") return DefenseKind::none;
    if (s == "patch_drop") return DefenseKind::patch_drop;
    if (s == "patch_shuffle") return DefenseKind::patch_shuffle;
    throw config_error("unknown defense kind: " + s);
}

const char* placement_name(Placement p) {
    switch (p) {
        case Placement::none: return "none";
        case Placement::train: return "train";
        case Placement::eval: return "eval";
        case Placement::both: return "both";
    }
    return "none";
}

Placement placement_from_name(const std::string& s) {
    if (s == "none") return Placement::none;
    if (s == "train") return Placement::train;
    if (s == "eval") return Placement::eval;
    if (s == "both") return Placement::both;
    throw config_error("unknown defense placement: " + s);
}

std::vector<int> draw_permutation(int n, uint64_t seed) {
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    for (int i = n - 1; i > 0; --i) {
        std::uniform_int_distribution<int> d(0, i);
        std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(d(rng))]);
    }
    return perm;
}

namespace {

void copy_cell(const float* src_img, float* dst_img, int h, int w, int c, int p,
               int src_cell, int dst_cell) {
    const int gw = w / p;
    const int sy = (src_cell / gw) * p, sx = (src_cell % gw) * p;
    const int dy = (dst_cell / gw) * p, dx = (dst_cell % gw) * p;
    for (int r = 0; r < p; ++r) {
        const float* s = src_img + ((static_cast<int64_t>(sy) + r) * w + sx) * c;
        float* d = dst_img + ((static_cast<int64_t>(dy) + r) * w + dx) * c;
        std::copy(s, s + static_cast<int64_t>(p) * c, d);
    }
    (void)h;
}

} // namespace

void apply_patch_permutation(std::span<float> img, int h, int w, int c,
                             int patch_size, std::span<const int> perm) {
    check_patch_divisible(h, w, patch_size, "patch permutation");
    const int n = (h / patch_size) * (w / patch_size);
    if (perm.size() != static_cast<size_t>(n))
        throw dim_error("patch permutation length mismatch");
    std::vector<float> src(img.begin(), img.end());
    for (int g = 0; g < n; ++g)
        copy_cell(src.data(), img.data(), h, w, c, patch_size, perm[static_cast<size_t>(g)], g);
}

void patch_drop(std::span<float> img, int h, int w, int c, int patch_size,
                float drop_rate, uint64_t seed) {
    check_patch_divisible(h, w, patch_size, "patch_drop");
    if (drop_rate < 0.0f || drop_rate >= 1.0f)
        throw config_error("patch_drop: drop rate must be in [0,1)");
    const int gw = w / patch_size;
    const int n = (h / patch_size) * gw;
    const int k = static_cast<int>(std::floor(static_cast<double>(drop_rate) * n));
    if (k == 0) return;

    std::vector<int> cells(static_cast<size_t>(n));
    std::iota(cells.begin(), cells.end(), 0);
    std::mt19937_64 rng(seed);
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> d(i, n - 1);
        std::swap(cells[static_cast<size_t>(i)], cells[static_cast<size_t>(d(rng))]);
    }
    for (int i = 0; i < k; ++i) {
        const int cell = cells[static_cast<size_t>(i)];
        const int y0 = (cell / gw) * patch_size, x0 = (cell % gw) * patch_size;
        for (int r = 0; r < patch_size; ++r) {
            float* row = img.data() + ((static_cast<int64_t>(y0) + r) * w + x0) * c;
            std::fill(row, row + static_cast<int64_t>(patch_size) * c, 0.0f);
        }
    }
}

std::vector<int> patch_shuffle(std::span<float> img, int h, int w, int c,
                               int patch_size, uint64_t seed) {
    check_patch_divisible(h, w, patch_size, "patch_shuffle");
    const int n = (h / patch_size) * (w / patch_size);
    std::vector<int> perm = draw_permutation(n, seed);
    apply_patch_permutation(img, h, w, c, patch_size, perm);
    return perm;
}

void apply_defense_inplace(std::span<float> img, int h, int w, int c,
                           const DefenseSpec& spec, uint64_t seed) {
    switch (spec.kind) {
        case DefenseKind::none: return;
        case DefenseKind::patch_drop:
            patch_drop(img, h, w, c, spec.patch_size, spec.drop_rate, seed);
            return;
        case DefenseKind::patch_shuffle:
            patch_shuffle(img, h, w, c, spec.patch_size, seed);
            return;
    }
}

} // namespace vsslab::defenses
