// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "vsslab/image.hpp"

namespace vsslab::attacks {

enum class TriggerKind { none, corner_patch, blend, per_patch_pixel };
enum class Anchor { bottom_right, bottom_left, top_right, top_left };

const char* trigger_kind_name(TriggerKind k);
TriggerKind trigger_kind_from_name(const std::string& s);

// Declarative trigger description. Only the fields of the active kind are
// consulted; defaults follow the 32x32 desk-scale configuration.
struct TriggerSpec {
    TriggerKind kind = TriggerKind::none;
    int target_class = 0;

    // corner_patch: pattern pasted at `anchor`; empty pattern means a solid
    // white square of patch_h x patch_w.
    int patch_h = 3, patch_w = 3;
    std::vector<float> pattern; // patch_h * patch_w * c, HWC
    Anchor anchor = Anchor::bottom_right;

    // blend: x_hat = (1-alpha) x + alpha pattern (full-image pattern;
    // empty means the built-in procedural pattern).
    float alpha = 0.2f;
    std::vector<float> blend_pattern;

    // per_patch_pixel: additive single-pixel lattice with stride gap+1,
    // repeated identically in every patch_size x patch_size tile.
    // intensity is on the byte scale (added as intensity/255).
    int patch_size = 4;
    int gap = 1;
    float intensity = 30.0f;
};

struct PoisonPlan {
    double rate = 0.0;
    std::vector<int> indices; // ascending, all with label != target
    uint64_t seed = 0;
};

struct ManifestEntry {
    int id;
    int original_label;
    int new_label;
    TriggerKind kind;
    uint64_t seed;
};

struct PoisonResult {
    Dataset poisoned;                    // same size/order as the input set
    std::vector<ManifestEntry> manifest; // one record per poisoned id
};

// Deterministic full-image pattern used when no blend payload is supplied.
std::vector<float> builtin_blend_pattern(int h, int w, int c);

// P x P additive mask (byte scale already divided out): intensity/255 at
// lattice points spaced gap+1 apart starting at the patch origin.
std::vector<float> make_per_patch_trigger(int patch_size, int gap, float intensity);

void apply_trigger_inplace(std::span<float> img, int h, int w, int c,
                           const TriggerSpec& spec);
std::vector<float> apply_trigger(std::span<const float> img, int h, int w, int c,
                                 const TriggerSpec& spec);

PoisonPlan select_poison_indices(std::span<const int> labels, double rate,
                                 int target_class, uint64_t seed);

PoisonResult poison_dataset(const Dataset& train, const TriggerSpec& spec,
                            const PoisonPlan& plan);

void write_manifest(std::ostream& os, std::span<const ManifestEntry> entries);
void write_manifest_file(const std::string& path, std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest_file(const std::string& path);

} // namespace vsslab::attacks
