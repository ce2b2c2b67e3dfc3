// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vsslab/image.hpp"

namespace vsslab::defenses {

enum class DefenseKind { none, patch_drop, patch_shuffle };
enum class Placement { none, train, eval, both };

const char* defense_kind_name(DefenseKind k);
DefenseKind defense_kind_from_name(const std::string& s);
const char* placement_name(Placement p);
Placement placement_from_name(const std::string& s);

struct DefenseSpec {
    DefenseKind kind = DefenseKind::none;
    int patch_size = 16;
    float drop_rate = 0.2f;
    uint64_t seed = 0;
};

// Uniform random permutation of {0..n-1} via Fisher-Yates.
std::vector<int> draw_permutation(int n, uint64_t seed);

// Moves whole patch_size cells: cell g of the output holds cell perm[g] of
// the input.
void apply_patch_permutation(std::span<float> img, int h, int w, int c,
                             int patch_size, std::span<const int> perm);

// Zero-fills floor(drop_rate * n_patches) grid cells chosen without
// replacement from `seed`.
void patch_drop(std::span<float> img, int h, int w, int c, int patch_size,
                float drop_rate, uint64_t seed);

// Shuffles the patch grid with a permutation drawn from `seed`; returns the
// permutation that was applied.
std::vector<int> patch_shuffle(std::span<float> img, int h, int w, int c,
                               int patch_size, uint64_t seed);

// Dispatch on spec.kind; `seed` is the per-image seed (derive it from the
// spec seed and the sample id for batch work).
void apply_defense_inplace(std::span<float> img, int h, int w, int c,
                           const DefenseSpec& spec, uint64_t seed);

} // namespace vsslab::defenses
