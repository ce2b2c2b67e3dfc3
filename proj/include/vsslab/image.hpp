// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vsslab/common.hpp"

namespace vsslab {

// Contiguous batch of same-shaped images, HWC interleaved, values in [0,1].
struct ImageBatch {
    int n = 0, h = 0, w = 0, c = 0;
    std::vector<float> data;

    ImageBatch() = default;
    ImageBatch(int n_, int h_, int w_, int c_)
        : n(n_), h(h_), w(w_), c(c_),
          data(static_cast<size_t>(n_) * h_ * w_ * c_, 0.0f) {}

    int64_t pixels_per_image() const { return static_cast<int64_t>(h) * w * c; }
    float* image(int i) { return data.data() + i * pixels_per_image(); }
    const float* image(int i) const { return data.data() + i * pixels_per_image(); }
    std::span<float> image_span(int i) {
        return {image(i), static_cast<size_t>(pixels_per_image())};
    }
    std::span<const float> image_span(int i) const {
        return {image(i), static_cast<size_t>(pixels_per_image())};
    }
};

struct Dataset {
    ImageBatch images;
    std::vector<int> labels;
    int num_classes = 0;

    int size() const { return images.n; }
};

inline void check_patch_divisible(int h, int w, int p, const char* what) {
    if (p <= 0 || h % p != 0 || w % p != 0)
        throw dim_error(std::string(what) + ": image sides must be divisible by patch size");
}

// Extract non-overlapping p x p patches in row-major grid order; each patch
// flattened (row, column, channel). Output is n_patches x (p*p*c).
inline std::vector<float> patchify(const float* img, int h, int w, int c, int p) {
    check_patch_divisible(h, w, p, "patchify");
    const int gh = h / p, gw = w / p;
    const int plen = p * p * c;
    std::vector<float> out(static_cast<size_t>(gh) * gw * plen);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            float* dst = out.data() + (static_cast<size_t>(gy) * gw + gx) * plen;
            for (int r = 0; r < p; ++r) {
                const float* src = img + ((static_cast<int64_t>(gy) * p + r) * w +
                                          static_cast<int64_t>(gx) * p) * c;
                for (int q = 0; q < p * c; ++q) dst[r * p * c + q] = src[q];
            }
        }
    return out;
}

} // namespace vsslab
