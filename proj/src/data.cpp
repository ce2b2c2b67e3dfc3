// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0

#include "vsslab/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

namespace vsslab::data {

namespace {
constexpr int kCifarSide = 32;
constexpr int kCifarChannels = 3;
constexpr size_t kRecordBytes = 1 + 3072;
} // namespace

Dataset load_cifar_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw data_format_error("cannot open dataset file: " + path);
    const auto bytes = static_cast<uint64_t>(f.tellg());
    if (bytes == 0 || bytes % kRecordBytes != 0)
        throw data_format_error("file length not divisible by record size (3073): " + path);
    const int n = static_cast<int>(bytes / kRecordBytes);
    f.seekg(0);

    Dataset ds;
    ds.num_classes = 10;
    ds.images = ImageBatch(n, kCifarSide, kCifarSide, kCifarChannels);
    ds.labels.resize(static_cast<size_t>(n));

    std::vector<unsigned char> rec(kRecordBytes);
    for (int i = 0; i < n; ++i) {
        f.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
        if (!f) throw data_format_error("unexpected end of file: " + path);
        const int label = rec[0];
        if (label > 9)
            throw data_format_error("label out of range at record " + std::to_string(i) +
                                    ": " + path);
        ds.labels[static_cast<size_t>(i)] = label;
        float* img = ds.images.image(i);
        for (int ch = 0; ch < kCifarChannels; ++ch)
            for (int y = 0; y < kCifarSide; ++y)
                for (int x = 0; x < kCifarSide; ++x)
                    img[(static_cast<size_t>(y) * kCifarSide + x) * kCifarChannels + ch] =
                        static_cast<float>(rec[1 + static_cast<size_t>(ch) * 1024 +
                                               static_cast<size_t>(y) * kCifarSide + x]) /
                        255.0f;
    }
    return ds;
}

namespace {

Dataset concat(Dataset a, const Dataset& b) {
    a.images.data.insert(a.images.data.end(), b.images.data.begin(), b.images.data.end());
    a.images.n += b.images.n;
    a.labels.insert(a.labels.end(), b.labels.begin(), b.labels.end());
    return a;
}

} // namespace

CifarPair ingest_cifar10_binary(const std::string& dir) {
    namespace fs = std::filesystem;
    CifarPair out;
    bool first = true;
    for (int i = 1; i <= 5; ++i) {
        const std::string p = (fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin")).string();
        if (!fs::exists(p)) throw data_format_error("missing CIFAR-10 batch file: " + p);
        Dataset d = load_cifar_file(p);
        out.train = first ? std::move(d) : concat(std::move(out.train), d);
        first = false;
    }
    const std::string tp = (fs::path(dir) / "test_batch.bin").string();
    if (!fs::exists(tp)) throw data_format_error("missing CIFAR-10 test file: " + tp);
    out.test = load_cifar_file(tp);
    return out;
}

void write_cifar_binary(const std::string& path, const Dataset& ds) {
    if (ds.images.h != kCifarSide || ds.images.w != kCifarSide ||
        ds.images.c != kCifarChannels)
        throw dim_error("write_cifar_binary: only 32x32x3 images supported");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_format_error("cannot open dataset file for writing: " + path);
    std::vector<unsigned char> rec(kRecordBytes);
    for (int i = 0; i < ds.size(); ++i) {
        rec[0] = static_cast<unsigned char>(ds.labels[static_cast<size_t>(i)]);
        const float* img = ds.images.image(i);
        for (int ch = 0; ch < kCifarChannels; ++ch)
            for (int y = 0; y < kCifarSide; ++y)
                for (int x = 0; x < kCifarSide; ++x) {
                    const float v = img[(static_cast<size_t>(y) * kCifarSide + x) * kCifarChannels + ch];
                    const int b = static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
                    rec[1 + static_cast<size_t>(ch) * 1024 + static_cast<size_t>(y) * kCifarSide + x] =
                        static_cast<unsigned char>(b);
                }
        f.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
    }
    if (!f) throw data_format_error("write failed: " + path);
}

Dataset make_synthetic(int n, int classes, int h, int w, int c, uint64_t seed) {
    if (n <= 0 || classes <= 0 || h <= 0 || w <= 0 || c <= 0)
        throw config_error("make_synthetic: all sizes must be positive");
    Dataset ds;
    ds.num_classes = classes;
    ds.images = ImageBatch(n, h, w, c);
    ds.labels.resize(static_cast<size_t>(n));

    // class-specific grating parameters
    std::vector<double> ax(static_cast<size_t>(classes)), ay(static_cast<size_t>(classes)),
        ph(static_cast<size_t>(classes));
    for (int k = 0; k < classes; ++k) {
        std::mt19937_64 rng(derive_seed(seed, 0x1000u + static_cast<uint64_t>(k)));
        std::uniform_real_distribution<double> freq(0.8, 3.2), phase(0.0, 6.28318);
        ax[static_cast<size_t>(k)] = freq(rng);
        ay[static_cast<size_t>(k)] = freq(rng);
        ph[static_cast<size_t>(k)] = phase(rng);
    }

    const double two_pi = 6.283185307179586;
    for (int i = 0; i < n; ++i) {
        const int k = i % classes;
        ds.labels[static_cast<size_t>(i)] = k;
        std::mt19937_64 rng(derive_seed(seed, static_cast<uint64_t>(i)));
        std::uniform_real_distribution<double> jitter(0.0, two_pi);
        std::uniform_real_distribution<double> noise(-0.08, 0.08);
        const double pj = jitter(rng);
        float* img = ds.images.image(i);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ch = 0; ch < c; ++ch) {
                    const double v =
                        0.5 +
                        0.35 * std::sin(two_pi * (ax[static_cast<size_t>(k)] * x / w +
                                                  ay[static_cast<size_t>(k)] * y / h) +
                                        ph[static_cast<size_t>(k)] + pj + 1.9 * ch) +
                        noise(rng);
                    img[(static_cast<size_t>(y) * w + x) * c + ch] =
                        static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
    }
    return ds;
}

Dataset subset(const Dataset& ds, int limit) {
    if (limit <= 0 || limit >= ds.size()) return ds;
    Dataset out;
    out.num_classes = ds.num_classes;
    out.images = ImageBatch(limit, ds.images.h, ds.images.w, ds.images.c);
    std::copy_n(ds.images.data.begin(),
                static_cast<size_t>(limit) * ds.images.pixels_per_image(),
                out.images.data.begin());
    out.labels.assign(ds.labels.begin(), ds.labels.begin() + limit);
    return out;
}

} // namespace vsslab::data
