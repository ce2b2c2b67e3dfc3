// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0

#include "vsslab/model.hpp"

namespace vsslab::models {

const char* family_name(Family f) {
    return f == Family::vss ? "vss" : "gated_cnn";
}

Family family_from_name(const std::string& s) {
    if (s == "vss") return Family::vss;
    if (s == "gated_cnn") return Family::gated_cnn;
    throw config_error("unknown model family: " + s);
}

namespace {

struct LayoutBuilder {
    ModelLayout& L;
    int64_t off = 0;

    TensorRef add(const std::string& name, ParamKind kind, int rows, int cols, int fan_in) {
        TensorRef r{off, rows, cols};
        off += r.count();
        L.entries.push_back({name, kind, r, fan_in});
        return r;
    }
};

} // namespace

ModelLayout build_layout(const ModelConfig& cfg) {
    cfg.validate();
    ModelLayout L;
    L.cfg = cfg;
    LayoutBuilder b{L};

    const int d = cfg.dim, e = cfg.expand_dim(), n = cfg.state_dim, k = cfg.conv_width;
    L.proj = b.add("embed.proj", ParamKind::weight, cfg.patch_len(), d, cfg.patch_len());
    L.cls = b.add("embed.cls", ParamKind::embedding, 1, d, 0);
    L.pos = b.add("embed.pos", ParamKind::embedding, cfg.tokens(), d, 0);

    L.blocks.resize(static_cast<size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string p = "block" + std::to_string(i) + ".";
        BlockRefs& B = L.blocks[static_cast<size_t>(i)];
        B.norm_g = b.add(p + "norm.g", ParamKind::norm_scale, 1, d, 0);
        B.norm_b = b.add(p + "norm.b", ParamKind::norm_shift, 1, d, 0);
        B.wx = b.add(p + "wx", ParamKind::weight, d, e, d);
        B.wz = b.add(p + "wz", ParamKind::weight, d, e, d);
        for (int o = 0; o < 2; ++o) {
            const std::string q = p + (o == 0 ? "fwd." : "bwd.");
            DirRefs& R = B.dir[o];
            R.conv_w = b.add(q + "conv.w", ParamKind::weight, e, k, k);
            R.conv_b = b.add(q + "conv.b", ParamKind::bias, 1, e, 0);
            if (cfg.family == Family::vss) {
                R.wb = b.add(q + "wb", ParamKind::weight, e, n, e);
                R.wc = b.add(q + "wc", ParamKind::weight, e, n, e);
                R.wdt = b.add(q + "wdt", ParamKind::weight, e, e, e);
                R.bdt = b.add(q + "bdt", ParamKind::dt_bias, 1, e, 0);
                R.a = b.add(q + "a", ParamKind::evolution, e, n, 0);
            }
        }
        B.wout = b.add(p + "wout", ParamKind::weight, e, d, e);
    }

    L.head_ng = b.add("head.norm.g", ParamKind::norm_scale, 1, d, 0);
    L.head_nb = b.add("head.norm.b", ParamKind::norm_shift, 1, d, 0);
    L.head_w = b.add("head.w", ParamKind::weight, d, cfg.classes, d);
    L.head_b = b.add("head.b", ParamKind::bias, 1, cfg.classes, 0);
    L.total = b.off;
    return L;
}

int64_t param_count(const ModelConfig& cfg) {
    return build_layout(cfg).total;
}

} // namespace vsslab::models
