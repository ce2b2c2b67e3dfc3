// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0

#include "vsslab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace vsslab::attacks {

const char* trigger_kind_name(TriggerKind k) {
    switch (k) {
        case TriggerKind::none: return "none";
        case TriggerKind::corner_patch: return "corner_patch";
        case TriggerKind::blend: return "blend";
        case TriggerKind::per_patch_pixel: return "per_patch_pixel";
    }
    return "none";
}

TriggerKind trigger_kind_from_name(const std::string& s) {
    if (s == "none") return TriggerKind::none;
    if (s == "corner_patch") return TriggerKind::corner_patch;
    if (s == "blend") return TriggerKind::blend;
    if (s == "per_patch_pixel") return TriggerKind::per_patch_pixel;
    throw config_error("unknown trigger kind: " + s);
}

std::vector<float> builtin_blend_pattern(int h, int w, int c) {
    std::vector<float> p(static_cast<size_t>(h) * w * c);
    const double two_pi = 6.283185307179586;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                const double fx = static_cast<double>(x) / w;
                const double fy = static_cast<double>(y) / h;
                const double v = 0.5 + 0.25 * std::sin(two_pi * ((ch + 1) * fx + 2.0 * fy)) +
                                 0.25 * std::cos(two_pi * (3.0 * fx - (ch + 2) * fy));
                p[(static_cast<size_t>(y) * w + x) * c + ch] =
                    static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
    return p;
}

std::vector<float> make_per_patch_trigger(int patch_size, int gap, float intensity) {
    if (patch_size < 2) throw config_error("per-patch trigger: patch size must be >= 2");
    if (gap < 0) throw config_error("per-patch trigger: gap must be >= 0");
    if (intensity < 0) throw config_error("per-patch trigger: intensity must be >= 0");
    const int stride = gap + 1;
    if (stride > patch_size)
        throw config_error("per-patch trigger: stride exceeds patch size (empty mask)");
    std::vector<float> mask(static_cast<size_t>(patch_size) * patch_size, 0.0f);
    for (int r = 0; r < patch_size; r += stride)
        for (int col = 0; col < patch_size; col += stride)
            mask[static_cast<size_t>(r) * patch_size + col] = intensity / 255.0f;
    return mask;
}

namespace {

void paste_corner(std::span<float> img, int h, int w, int c, const TriggerSpec& spec) {
    const int ph = spec.patch_h, pw = spec.patch_w;
    if (ph <= 0 || pw <= 0 || ph > h || pw > w)
        throw dim_error("corner trigger pattern larger than image");
    if (!spec.pattern.empty() &&
        spec.pattern.size() != static_cast<size_t>(ph) * pw * c)
        throw dim_error("corner trigger pattern size mismatch");

    int r0 = 0, c0 = 0;
    switch (spec.anchor) {
        case Anchor::bottom_right: r0 = h - ph; c0 = w - pw; break;
        case Anchor::bottom_left: r0 = h - ph; c0 = 0; break;
        case Anchor::top_right: r0 = 0; c0 = w - pw; break;
        case Anchor::top_left: r0 = 0; c0 = 0; break;
    }
    for (int r = 0; r < ph; ++r)
        for (int col = 0; col < pw; ++col)
            for (int ch = 0; ch < c; ++ch) {
                const float v = spec.pattern.empty()
                                    ? 1.0f
                                    : spec.pattern[(static_cast<size_t>(r) * pw + col) * c + ch];
                img[((static_cast<size_t>(r0) + r) * w + (c0 + col)) * c + ch] = v;
            }
}

void apply_blend(std::span<float> img, int h, int w, int c, const TriggerSpec& spec) {
    if (spec.alpha < 0.0f || spec.alpha > 1.0f)
        throw config_error("blend trigger: alpha must be in [0,1]");
    const size_t len = static_cast<size_t>(h) * w * c;
    const std::vector<float>* pat = &spec.blend_pattern;
    std::vector<float> fallback;
    if (pat->empty()) {
        fallback = builtin_blend_pattern(h, w, c);
        pat = &fallback;
    }
    if (pat->size() != len) throw dim_error("blend pattern size mismatch");
    const float a = spec.alpha;
    for (size_t i = 0; i < len; ++i) img[i] = (1.0f - a) * img[i] + a * (*pat)[i];
}

void apply_per_patch(std::span<float> img, int h, int w, int c, const TriggerSpec& spec) {
    const std::vector<float> mask =
        make_per_patch_trigger(spec.patch_size, spec.gap, spec.intensity);
    const int p = spec.patch_size;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float add = mask[static_cast<size_t>(y % p) * p + (x % p)];
            if (add == 0.0f) continue;
            for (int ch = 0; ch < c; ++ch) {
                float& v = img[(static_cast<size_t>(y) * w + x) * c + ch];
                v = std::min(1.0f, std::max(0.0f, v + add));
            }
        }
}

} // namespace

void apply_trigger_inplace(std::span<float> img, int h, int w, int c,
                           const TriggerSpec& spec) {
    if (img.size() != static_cast<size_t>(h) * w * c)
        throw dim_error("apply_trigger: image buffer size mismatch");
    switch (spec.kind) {
        case TriggerKind::none: return;
        case TriggerKind::corner_patch: paste_corner(img, h, w, c, spec); return;
        case TriggerKind::blend: apply_blend(img, h, w, c, spec); return;
        case TriggerKind::per_patch_pixel: apply_per_patch(img, h, w, c, spec); return;
    }
}

std::vector<float> apply_trigger(std::span<const float> img, int h, int w, int c,
                                 const TriggerSpec& spec) {
    std::vector<float> out(img.begin(), img.end());
    apply_trigger_inplace(out, h, w, c, spec);
    return out;
}

PoisonPlan select_poison_indices(std::span<const int> labels, double rate,
                                 int target_class, uint64_t seed) {
    if (rate < 0.0 || rate > 1.0)
        throw config_error("poison rate must be in [0,1]");
    const size_t n = labels.size();
    const size_t k = static_cast<size_t>(std::floor(rate * static_cast<double>(n)));

    std::vector<int> candidates;
    candidates.reserve(n);
    for (size_t i = 0; i < n; ++i)
        if (labels[i] != target_class) candidates.push_back(static_cast<int>(i));
    if (k > candidates.size())
        throw config_error("infeasible poison rate: " + std::to_string(k) +
                           " samples requested but only " +
                           std::to_string(candidates.size()) + " non-target samples");

    // Partial Fisher-Yates over the non-target ids.
    std::mt19937_64 rng(seed);
    for (size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<size_t> d(i, candidates.size() - 1);
        std::swap(candidates[i], candidates[d(rng)]);
    }
    PoisonPlan plan;
    plan.rate = rate;
    plan.seed = seed;
    plan.indices.assign(candidates.begin(), candidates.begin() + static_cast<long>(k));
    std::sort(plan.indices.begin(), plan.indices.end());
    return plan;
}

PoisonResult poison_dataset(const Dataset& train, const TriggerSpec& spec,
                            const PoisonPlan& plan) {
    PoisonResult res;
    res.poisoned = train;
    std::vector<char> seen(static_cast<size_t>(train.size()), 0);
    res.manifest.reserve(plan.indices.size());
    for (int id : plan.indices) {
        if (id < 0 || id >= train.size())
            throw config_error("poison plan index out of range: " + std::to_string(id));
        if (seen[static_cast<size_t>(id)])
            throw config_error("poison plan contains duplicate index: " + std::to_string(id));
        seen[static_cast<size_t>(id)] = 1;
        if (train.labels[static_cast<size_t>(id)] == spec.target_class)
            throw config_error("poison plan selects a target-class sample: " + std::to_string(id));

        apply_trigger_inplace(res.poisoned.images.image_span(id), train.images.h,
                              train.images.w, train.images.c, spec);
        res.poisoned.labels[static_cast<size_t>(id)] = spec.target_class;
        res.manifest.push_back({id, train.labels[static_cast<size_t>(id)],
                                spec.target_class, spec.kind, plan.seed});
    }
    return res;
}

void write_manifest(std::ostream& os, std::span<const ManifestEntry> entries) {
    os << "# id\toriginal_label\tnew_label\ttrigger\tseed\n";
    for (const auto& e : entries)
        os << e.id << '\t' << e.original_label << '\t' << e.new_label << '\t'
           << trigger_kind_name(e.kind) << '\t' << e.seed << '\n';
}

void write_manifest_file(const std::string& path, std::span<const ManifestEntry> entries) {
    std::ofstream f(path);
    if (!f) throw data_format_error("cannot open manifest for writing: " + path);
    write_manifest(f, entries);
}

std::vector<ManifestEntry> read_manifest_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw data_format_error("cannot open manifest: " + path);
    std::vector<ManifestEntry> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        ManifestEntry e{};
        std::string kind;
        if (!(is >> e.id >> e.original_label >> e.new_label >> kind >> e.seed))
            throw data_format_error("malformed manifest line: " + line);
        e.kind = trigger_kind_from_name(kind);
        out.push_back(e);
    }
    return out;
}

} // namespace vsslab::attacks
