// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "vsslab/image.hpp"

namespace vsslab::data {

// One CIFAR-style binary file: 3073-byte records, 1 label byte followed by
// 3072 channel-major pixel bytes (32x32, R plane then G then B). Any record
// count divisible into the file size is accepted.
Dataset load_cifar_file(const std::string& path);

struct CifarPair {
    Dataset train;
    Dataset test;
};

// Canonical 5-batch layout: data_batch_1..5.bin plus test_batch.bin under
// `dir`. Pixels scaled to [0,1].
CifarPair ingest_cifar10_binary(const std::string& dir);

// Writes 32x32x3 images back to the binary record format (values rounded
// to bytes).
void write_cifar_binary(const std::string& path, const Dataset& ds);

// Seeded procedural dataset: per-class oriented gratings with per-sample
// phase jitter and noise. Classes are balanced round-robin.
Dataset make_synthetic(int n, int classes, int h, int w, int c, uint64_t seed);

// First `limit` samples (0 = everything).
Dataset subset(const Dataset& ds, int limit);

} // namespace vsslab::data
