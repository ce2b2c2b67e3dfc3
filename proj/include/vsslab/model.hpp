// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Two matched patch-sequence classifiers over a shared block skeleton:
// norm -> project to x,z -> per-direction causal conv -> (selective scan
// or identity) -> sum directions -> gate by silu(z) -> output projection,
// with a residual around the whole block. The vss family runs the scan;
// the gated_cnn family is the same block with the scan stage removed.
// Parameters live in one flat vector addressed through a ModelLayout so
// the optimizer, checkpoints and gradient checks all see plain arrays.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vsslab/common.hpp"
#include "vsslab/image.hpp"
#include "vsslab/ssm.hpp"
#include "vsslab/tensor.hpp"

namespace vsslab::models {

enum class Family { vss, gated_cnn };

const char* family_name(Family f);
Family family_from_name(const std::string& s);

struct ModelConfig {
    Family family = Family::vss;
    int depth = 2;     // blocks
    int dim = 64;      // token width
    int expand = 0;    // gate/branch width, 0 means 2*dim
    int state_dim = 8; // scan state per channel
    int patch = 4;
    int classes = 10;
    int image_h = 32, image_w = 32, image_c = 3;
    int conv_width = 4;
    uint64_t seed = 1;

    int expand_dim() const { return expand > 0 ? expand : 2 * dim; }
    int patches() const { return (image_h / patch) * (image_w / patch); }
    int tokens() const { return patches() + 1; }
    int patch_len() const { return patch * patch * image_c; }

    void validate() const {
        if (depth < 0 || dim <= 0 || state_dim <= 0 || patch <= 0 || classes <= 0 ||
            image_h <= 0 || image_w <= 0 || image_c <= 0 || conv_width <= 0)
            throw config_error("model config: all dimensions must be positive");
        check_patch_divisible(image_h, image_w, patch, "model config");
    }
};

struct TensorRef {
    int64_t off = 0;
    int rows = 0, cols = 0;
    int64_t count() const { return static_cast<int64_t>(rows) * cols; }
};

enum class ParamKind { weight, bias, norm_scale, norm_shift, embedding, evolution, dt_bias };

struct LayoutEntry {
    std::string name;
    ParamKind kind;
    TensorRef ref;
    int fan_in;
};

struct DirRefs {
    TensorRef conv_w, conv_b;          // e x k, e
    TensorRef wb, wc, wdt, bdt, a;     // vss only
};

struct BlockRefs {
    TensorRef norm_g, norm_b; // d
    TensorRef wx, wz;         // d x e
    DirRefs dir[2];
    TensorRef wout; // e x d
};

struct ModelLayout {
    ModelConfig cfg;
    TensorRef proj; // patch_len x d
    TensorRef cls;  // d
    TensorRef pos;  // tokens x d
    std::vector<BlockRefs> blocks;
    TensorRef head_ng, head_nb; // d
    TensorRef head_w;           // d x classes
    TensorRef head_b;           // classes
    std::vector<LayoutEntry> entries;
    int64_t total = 0;
};

ModelLayout build_layout(const ModelConfig& cfg);

template <typename T>
struct ModelState {
    ModelLayout layout;
    std::vector<T> theta;

    const ModelConfig& cfg() const { return layout.cfg; }
    std::span<T> at(const TensorRef& r) {
        return {theta.data() + r.off, static_cast<size_t>(r.count())};
    }
    std::span<const T> at(const TensorRef& r) const {
        return {theta.data() + r.off, static_cast<size_t>(r.count())};
    }
};

// Parameter values are drawn per entry from a seed mixed with the entry
// name, so shared tensors of a vss model and a gated_cnn model built from
// the same seed are identical.
template <typename T>
void init_params(const ModelLayout& layout, std::span<T> theta, uint64_t seed) {
    if (theta.size() != static_cast<size_t>(layout.total))
        throw dim_error("init_params: theta size mismatch");
    const int n = layout.cfg.state_dim;
    const int e = layout.cfg.expand_dim();
    for (const auto& ent : layout.entries) {
        std::span<T> out = {theta.data() + ent.ref.off, static_cast<size_t>(ent.ref.count())};
        std::mt19937_64 rng(derive_seed(seed, fnv1a64(ent.name)));
        switch (ent.kind) {
            case ParamKind::weight:
                fill_fan_in(out, ent.fan_in, rng);
                break;
            case ParamKind::bias:
                std::fill(out.begin(), out.end(), T(0));
                break;
            case ParamKind::norm_scale:
                std::fill(out.begin(), out.end(), T(1));
                break;
            case ParamKind::norm_shift:
                std::fill(out.begin(), out.end(), T(0));
                break;
            case ParamKind::embedding:
                fill_uniform(out, T(-0.02), T(0.02), rng);
                break;
            case ParamKind::evolution:
                // negative, log-spaced magnitudes in [1, n] per state dim
                for (int d = 0; d < ent.ref.rows; ++d)
                    for (int i = 0; i < n; ++i) {
                        const double frac = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
                        out[static_cast<size_t>(d) * n + i] =
                            static_cast<T>(-std::exp(frac * std::log(static_cast<double>(n))));
                    }
                break;
            case ParamKind::dt_bias:
                // softplus(bdt) log-spaced in [1e-3, 1e-1] across channels
                for (int d = 0; d < static_cast<int>(out.size()); ++d) {
                    const double frac = e > 1 ? static_cast<double>(d) / (e - 1) : 0.0;
                    const double dt = std::exp(std::log(1e-3) + frac * (std::log(1e-1) - std::log(1e-3)));
                    out[static_cast<size_t>(d)] = static_cast<T>(softplus_inverse(dt));
                }
                break;
        }
    }
}

template <typename T>
ModelState<T> make_model(const ModelConfig& cfg) {
    ModelState<T> m;
    m.layout = build_layout(cfg);
    m.theta.assign(static_cast<size_t>(m.layout.total), T(0));
    init_params<T>(m.layout, m.theta, cfg.seed);
    return m;
}

// Copies the shared (non-scan) parameters of a vss model into a gated_cnn
// model of the same shape.
template <typename T>
ModelState<T> strip_to_gated_cnn(const ModelState<T>& vss) {
    if (vss.cfg().family != Family::vss)
        throw config_error("strip_to_gated_cnn: source must be a vss model");
    ModelConfig cfg = vss.cfg();
    cfg.family = Family::gated_cnn;
    ModelState<T> out;
    out.layout = build_layout(cfg);
    out.theta.assign(static_cast<size_t>(out.layout.total), T(0));
    // Names of shared tensors match; copy by name.
    for (const auto& ent : out.layout.entries) {
        for (const auto& src : vss.layout.entries) {
            if (src.name == ent.name) {
                std::copy_n(vss.theta.data() + src.ref.off, ent.ref.count(),
                            out.theta.data() + ent.ref.off);
                break;
            }
        }
    }
    return out;
}

// ---- forward / backward ----------------------------------------------------

inline constexpr double kNormEps = 1e-5;

template <typename T>
struct BlockCache {
    std::vector<T> tn;         // m x d
    std::vector<T> mean, rstd; // m
    std::vector<T> x, z;       // m x e
    struct Dir {
        std::vector<T> xo;       // m x e, direction-ordered conv input
        std::vector<T> conv_pre; // m x e
        std::vector<T> u;        // m x e
        ssm::SelectiveCache<T> scan;
        std::vector<T> s; // m x e, scan output in direction order
    };
    std::array<Dir, 2> dir;
    std::vector<T> ysum;  // m x e
    std::vector<T> gated; // m x e

    void resize(const ModelConfig& c, int m) {
        const size_t md = static_cast<size_t>(m) * c.dim;
        const size_t me = static_cast<size_t>(m) * c.expand_dim();
        tn.assign(md, T(0));
        mean.assign(static_cast<size_t>(m), T(0));
        rstd.assign(static_cast<size_t>(m), T(0));
        x.assign(me, T(0));
        z.assign(me, T(0));
        for (auto& dd : dir) {
            dd.xo.assign(me, T(0));
            dd.conv_pre.assign(me, T(0));
            dd.u.assign(me, T(0));
            dd.s.assign(me, T(0));
        }
        ysum.assign(me, T(0));
        gated.assign(me, T(0));
    }
};

template <typename T>
struct Workspace {
    std::vector<T> patches;                    // n_patches x patch_len
    std::vector<std::vector<T>> layer_tokens;  // depth+1 buffers of m x d
    std::vector<BlockCache<T>> blocks;
    std::vector<T> cls_norm; // d
    T head_mean = T(0), head_rstd = T(0);
    std::vector<T> logits;

    // backward scratch
    std::vector<T> d_tokens, d_tokens_next;              // m x d
    std::vector<T> dx, dz, du, ds, dxo, dysum, dscratch; // m x e
    ssm::SelectiveBackwardScratch<T> scan_scratch;

    void resize(const ModelLayout& L) {
        const auto& c = L.cfg;
        const size_t md = static_cast<size_t>(c.tokens()) * c.dim;
        const size_t me = static_cast<size_t>(c.tokens()) * c.expand_dim();
        patches.assign(static_cast<size_t>(c.patches()) * c.patch_len(), T(0));
        layer_tokens.assign(static_cast<size_t>(c.depth) + 1, std::vector<T>(md, T(0)));
        blocks.resize(static_cast<size_t>(c.depth));
        for (auto& b : blocks) b.resize(c, c.tokens());
        cls_norm.assign(static_cast<size_t>(c.dim), T(0));
        logits.assign(static_cast<size_t>(c.classes), T(0));
        d_tokens.assign(md, T(0));
        d_tokens_next.assign(md, T(0));
        dx.assign(me, T(0));
        dz.assign(me, T(0));
        du.assign(me, T(0));
        ds.assign(me, T(0));
        dxo.assign(me, T(0));
        dysum.assign(me, T(0));
    }
};

namespace detail {

template <typename T>
void layer_norm_rows(const T* in, int rows, int d, const T* g, const T* b, T* out,
                     T* mean, T* rstd) {
    for (int r = 0; r < rows; ++r) {
        const T* xi = in + static_cast<int64_t>(r) * d;
        T* yo = out + static_cast<int64_t>(r) * d;
        T mu = T(0);
        for (int j = 0; j < d; ++j) mu += xi[j];
        mu /= static_cast<T>(d);
        T var = T(0);
        for (int j = 0; j < d; ++j) {
            const T dv = xi[j] - mu;
            var += dv * dv;
        }
        var /= static_cast<T>(d);
        const T rs = T(1) / std::sqrt(var + T(kNormEps));
        for (int j = 0; j < d; ++j) yo[j] = g[j] * (xi[j] - mu) * rs + b[j];
        mean[r] = mu;
        rstd[r] = rs;
    }
}

// dx += LN'(dy); accumulates parameter grads.
template <typename T>
void layer_norm_rows_backward(const T* in, int rows, int d, const T* g, const T* mean,
                              const T* rstd, const T* dy, T* dx_acc, T* dg, T* db) {
    std::vector<T> dxhat(static_cast<size_t>(d));
    for (int r = 0; r < rows; ++r) {
        const T* xi = in + static_cast<int64_t>(r) * d;
        const T* dyr = dy + static_cast<int64_t>(r) * d;
        T* dxr = dx_acc + static_cast<int64_t>(r) * d;
        const T mu = mean[r], rs = rstd[r];
        T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
        for (int j = 0; j < d; ++j) {
            const T xhat = (xi[j] - mu) * rs;
            dg[j] += dyr[j] * xhat;
            db[j] += dyr[j];
            dxhat[static_cast<size_t>(j)] = dyr[j] * g[j];
            sum_dxhat += dxhat[static_cast<size_t>(j)];
            sum_dxhat_xhat += dxhat[static_cast<size_t>(j)] * xhat;
        }
        const T inv_d = T(1) / static_cast<T>(d);
        for (int j = 0; j < d; ++j) {
            const T xhat = (xi[j] - mu) * rs;
            dxr[j] += rs * (dxhat[static_cast<size_t>(j)] - sum_dxhat * inv_d -
                            xhat * sum_dxhat_xhat * inv_d);
        }
    }
}

template <typename T>
void causal_dwconv(const T* x, int m, int e, int k, const T* w, const T* b, T* out) {
    for (int t = 0; t < m; ++t) {
        const int lo = std::max(0, k - 1 - t);
        T* yo = out + static_cast<int64_t>(t) * e;
        for (int d = 0; d < e; ++d) {
            T acc = b[d];
            for (int j = lo; j < k; ++j)
                acc += w[static_cast<int64_t>(d) * k + j] *
                       x[static_cast<int64_t>(t - (k - 1) + j) * e + d];
            yo[d] = acc;
        }
    }
}

template <typename T>
void causal_dwconv_backward(const T* x, int m, int e, int k, const T* w, const T* dout,
                            T* dx_acc, T* dw, T* db) {
    for (int t = 0; t < m; ++t) {
        const int lo = std::max(0, k - 1 - t);
        const T* gy = dout + static_cast<int64_t>(t) * e;
        for (int d = 0; d < e; ++d) {
            const T gv = gy[d];
            db[d] += gv;
            for (int j = lo; j < k; ++j) {
                const int64_t src = static_cast<int64_t>(t - (k - 1) + j) * e + d;
                dw[static_cast<int64_t>(d) * k + j] += gv * x[src];
                dx_acc[src] += gv * w[static_cast<int64_t>(d) * k + j];
            }
        }
    }
}

template <typename T>
void reverse_rows(const T* in, int rows, int cols, T* out) {
    for (int r = 0; r < rows; ++r)
        std::copy_n(in + static_cast<int64_t>(r) * cols, cols,
                    out + static_cast<int64_t>(rows - 1 - r) * cols);
}

} // namespace detail

// Tokens = [cls; patch_i * proj; ...] + pos. Fills ws.patches and the
// layer-0 token buffer.
template <typename T>
void embed_forward(const ModelState<T>& m, const float* image, Workspace<T>& ws) {
    const auto& c = m.cfg();
    const std::vector<float> p = patchify(image, c.image_h, c.image_w, c.image_c, c.patch);
    for (size_t i = 0; i < p.size(); ++i) ws.patches[i] = static_cast<T>(p[i]);

    const int np = c.patches(), d = c.dim, plen = c.patch_len();
    std::span<const T> proj = m.at(m.layout.proj);
    std::span<const T> cls = m.at(m.layout.cls);
    std::span<const T> pos = m.at(m.layout.pos);
    T* t0 = ws.layer_tokens[0].data();
    for (int j = 0; j < d; ++j) t0[j] = cls[static_cast<size_t>(j)] + pos[static_cast<size_t>(j)];
    matmul(ws.patches.data(), proj.data(), t0 + d, np, plen, d);
    for (int64_t i = 0; i < static_cast<int64_t>(np) * d; ++i) t0[d + i] += pos[static_cast<size_t>(d + i)];
}

// One encoder block with residual over `mt` tokens. `bi` selects the
// parameter block; the scan stage runs only for the vss family.
// `scan_identity_hook` replaces the scan stage with the identity (test hook
// for the family-equivalence property).
template <typename T>
void block_forward(const ModelState<T>& m, int bi, const T* tin, T* tout,
                   BlockCache<T>& bc, int mt, bool parallel = false,
                   bool scan_identity_hook = false) {
    const auto& c = m.cfg();
    const BlockRefs& B = m.layout.blocks[static_cast<size_t>(bi)];
    const int d = c.dim, e = c.expand_dim(), n = c.state_dim, k = c.conv_width;
    const bool use_scan = c.family == Family::vss && !scan_identity_hook;

    detail::layer_norm_rows(tin, mt, d, m.at(B.norm_g).data(), m.at(B.norm_b).data(),
                            bc.tn.data(), bc.mean.data(), bc.rstd.data());
    matmul(bc.tn.data(), m.at(B.wx).data(), bc.x.data(), mt, d, e);
    matmul(bc.tn.data(), m.at(B.wz).data(), bc.z.data(), mt, d, e);

    for (int o = 0; o < 2; ++o) {
        auto& dir = bc.dir[static_cast<size_t>(o)];
        const DirRefs& R = B.dir[o];
        if (o == 0)
            std::copy_n(bc.x.data(), bc.x.size(), dir.xo.data());
        else
            detail::reverse_rows(bc.x.data(), mt, e, dir.xo.data());
        detail::causal_dwconv(dir.xo.data(), mt, e, k, m.at(R.conv_w).data(),
                              m.at(R.conv_b).data(), dir.conv_pre.data());
        for (size_t i = 0; i < dir.u.size(); ++i) dir.u[i] = silu(dir.conv_pre[i]);
        if (use_scan) {
            ssm::SelectiveParams<T> sp{m.at(R.wb).data(), m.at(R.wc).data(),
                                       m.at(R.wdt).data(), m.at(R.bdt).data(),
                                       m.at(R.a).data()};
            ssm::selective_scan(mt, e, n, dir.u.data(), sp, dir.s.data(), dir.scan, parallel);
        } else {
            std::copy_n(dir.u.data(), dir.u.size(), dir.s.data());
        }
    }

    // Sum the two directions back in token order, gate, project.
    for (int t = 0; t < mt; ++t) {
        const T* sf = bc.dir[0].s.data() + static_cast<int64_t>(t) * e;
        const T* sb = bc.dir[1].s.data() + static_cast<int64_t>(mt - 1 - t) * e;
        T* ys = bc.ysum.data() + static_cast<int64_t>(t) * e;
        const T* zr = bc.z.data() + static_cast<int64_t>(t) * e;
        T* gr = bc.gated.data() + static_cast<int64_t>(t) * e;
        for (int j = 0; j < e; ++j) {
            ys[j] = sf[j] + sb[j];
            gr[j] = ys[j] * silu(zr[j]);
        }
    }
    matmul(bc.gated.data(), m.at(B.wout).data(), tout, mt, e, d);
    for (int64_t i = 0; i < static_cast<int64_t>(mt) * d; ++i) tout[i] += tin[i];
    if (!all_finite<T>({tout, static_cast<size_t>(mt) * static_cast<size_t>(d)}))
        throw numeric_error("block " + std::to_string(bi) + ": non-finite activations");
}

// MLP head over the normalized class token (row 0).
template <typename T>
void head_forward(const ModelState<T>& m, const T* t_final, Workspace<T>& ws) {
    const auto& c = m.cfg();
    const int d = c.dim;
    T mean, rstd;
    detail::layer_norm_rows(t_final, 1, d, m.at(m.layout.head_ng).data(),
                            m.at(m.layout.head_nb).data(), ws.cls_norm.data(), &mean, &rstd);
    ws.head_mean = mean;
    ws.head_rstd = rstd;
    std::span<const T> hw = m.at(m.layout.head_w);
    std::span<const T> hb = m.at(m.layout.head_b);
    matmul(ws.cls_norm.data(), hw.data(), ws.logits.data(), 1, d, c.classes);
    for (int j = 0; j < c.classes; ++j) ws.logits[static_cast<size_t>(j)] += hb[static_cast<size_t>(j)];
}

template <typename T>
void model_forward(const ModelState<T>& m, const float* image, Workspace<T>& ws,
                   bool parallel = false) {
    embed_forward(m, image, ws);
    for (int l = 0; l < m.cfg().depth; ++l)
        block_forward(m, l, ws.layer_tokens[static_cast<size_t>(l)].data(),
                      ws.layer_tokens[static_cast<size_t>(l) + 1].data(),
                      ws.blocks[static_cast<size_t>(l)], m.cfg().tokens(), parallel);
    head_forward(m, ws.layer_tokens[static_cast<size_t>(m.cfg().depth)].data(), ws);
}

// Backward of block_forward over `mt` tokens. Adds d(loss)/d(tin) into
// `dtin_acc` (residual included) and parameter gradients into `grad`.
// `ws` supplies scratch buffers; bc must hold the matching forward caches.
template <typename T>
void block_backward(const ModelState<T>& m, int bi, const T* tin, BlockCache<T>& bc,
                    const T* dtout, T* dtin_acc, T* grad, Workspace<T>& ws, int mt,
                    bool scan_identity_hook = false) {
    const auto& c = m.cfg();
    const BlockRefs& B = m.layout.blocks[static_cast<size_t>(bi)];
    const int d = c.dim, e = c.expand_dim(), n = c.state_dim, k = c.conv_width;
    const bool use_scan = c.family == Family::vss && !scan_identity_hook;

    // residual path
    for (int64_t i = 0; i < static_cast<int64_t>(mt) * d; ++i) dtin_acc[i] += dtout[i];

    // output projection
    std::vector<T>& dgated = ws.dysum; // scratch
    std::fill(dgated.begin(), dgated.end(), T(0));
    matmul_nt_acc(dtout, m.at(B.wout).data(), dgated.data(), mt, d, e);
    matmul_tn_acc(bc.gated.data(), dtout, grad + B.wout.off, mt, e, d);

    // gate
    std::fill(ws.dx.begin(), ws.dx.end(), T(0));
    std::fill(ws.dz.begin(), ws.dz.end(), T(0));
    for (int64_t i = 0; i < static_cast<int64_t>(mt) * e; ++i) {
        const T zi = bc.z[static_cast<size_t>(i)];
        ws.dz[static_cast<size_t>(i)] =
            dgated[static_cast<size_t>(i)] * bc.ysum[static_cast<size_t>(i)] * silu_grad(zi);
    }

    for (int o = 0; o < 2; ++o) {
        auto& dir = bc.dir[static_cast<size_t>(o)];
        const DirRefs& R = B.dir[o];
        // direction-ordered upstream gradient of the scan output
        if (o == 0) {
            for (int t = 0; t < mt; ++t)
                for (int j = 0; j < e; ++j)
                    ws.ds[static_cast<size_t>(t) * e + j] =
                        dgated[static_cast<size_t>(t) * e + j] *
                        silu(bc.z[static_cast<size_t>(t) * e + j]);
        } else {
            for (int t = 0; t < mt; ++t)
                for (int j = 0; j < e; ++j)
                    ws.ds[static_cast<size_t>(mt - 1 - t) * e + j] =
                        dgated[static_cast<size_t>(t) * e + j] *
                        silu(bc.z[static_cast<size_t>(t) * e + j]);
        }

        std::fill(ws.du.begin(), ws.du.end(), T(0));
        if (use_scan) {
            ssm::SelectiveParams<T> sp{m.at(R.wb).data(), m.at(R.wc).data(),
                                       m.at(R.wdt).data(), m.at(R.bdt).data(),
                                       m.at(R.a).data()};
            ssm::SelectiveGrads<T> sg{grad + R.wb.off, grad + R.wc.off, grad + R.wdt.off,
                                      grad + R.bdt.off, grad + R.a.off};
            ssm::selective_scan_backward(mt, e, n, dir.u.data(), sp, dir.scan, ws.ds.data(),
                                         sg, ws.du.data(), ws.scan_scratch, false);
        } else {
            std::copy(ws.ds.begin(), ws.ds.end(), ws.du.begin());
        }

        // silu after conv
        for (size_t i = 0; i < ws.du.size(); ++i) ws.du[i] *= silu_grad(dir.conv_pre[i]);
        std::fill(ws.dxo.begin(), ws.dxo.end(), T(0));
        detail::causal_dwconv_backward(dir.xo.data(), mt, e, k, m.at(R.conv_w).data(),
                                       ws.du.data(), ws.dxo.data(), grad + R.conv_w.off,
                                       grad + R.conv_b.off);
        if (o == 0) {
            for (int64_t i = 0; i < static_cast<int64_t>(mt) * e; ++i)
                ws.dx[static_cast<size_t>(i)] += ws.dxo[static_cast<size_t>(i)];
        } else {
            for (int t = 0; t < mt; ++t)
                for (int j = 0; j < e; ++j)
                    ws.dx[static_cast<size_t>(t) * e + j] +=
                        ws.dxo[static_cast<size_t>(mt - 1 - t) * e + j];
        }
    }

    // projections to x and z, then the pre-norm
    std::vector<T> dtn(static_cast<size_t>(mt) * d, T(0));
    matmul_nt_acc(ws.dx.data(), m.at(B.wx).data(), dtn.data(), mt, e, d);
    matmul_tn_acc(bc.tn.data(), ws.dx.data(), grad + B.wx.off, mt, d, e);
    matmul_nt_acc(ws.dz.data(), m.at(B.wz).data(), dtn.data(), mt, e, d);
    matmul_tn_acc(bc.tn.data(), ws.dz.data(), grad + B.wz.off, mt, d, e);
    detail::layer_norm_rows_backward(tin, mt, d, m.at(B.norm_g).data(), bc.mean.data(),
                                     bc.rstd.data(), dtn.data(), dtin_acc,
                                     grad + B.norm_g.off, grad + B.norm_b.off);
}

// Accumulates parameter gradients into `grad` (layout.total elements).
// Requires the workspace of the matching forward call.
template <typename T>
void model_backward(const ModelState<T>& m, Workspace<T>& ws,
                    const T* dlogits, T* grad) {
    const auto& c = m.cfg();
    const ModelLayout& L = m.layout;
    const int mt = c.tokens(), d = c.dim;

    // head
    std::fill(ws.d_tokens.begin(), ws.d_tokens.end(), T(0));
    {
        const T* t_final = ws.layer_tokens[static_cast<size_t>(c.depth)].data();
        T* ghb = grad + L.head_b.off;
        std::vector<T> dcls_norm(static_cast<size_t>(d), T(0));
        for (int j = 0; j < c.classes; ++j) ghb[j] += dlogits[j];
        matmul_tn_acc(ws.cls_norm.data(), dlogits, grad + L.head_w.off, 1, d, c.classes);
        matmul_nt_acc(dlogits, m.at(L.head_w).data(), dcls_norm.data(), 1, c.classes, d);
        const T mean = ws.head_mean, rstd = ws.head_rstd;
        detail::layer_norm_rows_backward(t_final, 1, d, m.at(L.head_ng).data(), &mean,
                                         &rstd, dcls_norm.data(), ws.d_tokens.data(),
                                         grad + L.head_ng.off, grad + L.head_nb.off);
    }

    // blocks, in reverse
    for (int bi = c.depth - 1; bi >= 0; --bi) {
        std::fill(ws.d_tokens_next.begin(), ws.d_tokens_next.end(), T(0));
        block_backward(m, bi, ws.layer_tokens[static_cast<size_t>(bi)].data(),
                       ws.blocks[static_cast<size_t>(bi)], ws.d_tokens.data(),
                       ws.d_tokens_next.data(), grad, ws, mt);
        std::swap(ws.d_tokens, ws.d_tokens_next);
    }

    // embedding
    {
        const T* dt0 = ws.d_tokens.data();
        T* gpos = grad + L.pos.off;
        T* gcls = grad + L.cls.off;
        for (int64_t i = 0; i < static_cast<int64_t>(mt) * d; ++i) gpos[i] += dt0[i];
        for (int j = 0; j < d; ++j) gcls[j] += dt0[j];
        matmul_tn_acc(ws.patches.data(), dt0 + d, grad + L.proj.off, c.patches(),
                      c.patch_len(), d);
    }
}

int64_t param_count(const ModelConfig& cfg);

} // namespace vsslab::models
