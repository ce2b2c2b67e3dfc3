// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0

#include "vsslab/train.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vsslab::training {

double lr_at_step(const TrainConfig& cfg, int64_t step, int64_t total_steps) {
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
        return cfg.warmup_lr + (cfg.base_lr - cfg.warmup_lr) *
                                   static_cast<double>(step) / cfg.warmup_steps;
    const int64_t decay_len = total_steps - cfg.warmup_steps;
    if (decay_len <= 0) return cfg.base_lr;
    const double prog = static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(decay_len);
    return cfg.base_lr * 0.5 * (1.0 + std::cos(3.141592653589793 * std::min(1.0, prog)));
}

namespace {

struct ThreadCtx {
    models::Workspace<float> ws;
    std::vector<float> grad;
    std::vector<float> img;
    std::vector<float> dlogits;
};

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

} // namespace

TrainResult train(models::ModelState<float>& model, const Dataset& data,
                  const TrainConfig& cfg, const defenses::DefenseSpec* train_defense,
                  const EvalHook& hook) {
    cfg.validate();
    if (data.size() == 0) throw config_error("train: empty dataset");
    const auto& mc = model.cfg();
    if (data.images.h != mc.image_h || data.images.w != mc.image_w ||
        data.images.c != mc.image_c)
        throw dim_error("train: dataset shape does not match model config");

    const int n = data.size();
    const int64_t total = model.layout.total;
    const int batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    const int64_t total_steps = static_cast<int64_t>(cfg.epochs) * batches;

    std::vector<float> grad(static_cast<size_t>(total), 0.0f);
    std::vector<float> m1(static_cast<size_t>(total), 0.0f);
    std::vector<float> m2(static_cast<size_t>(total), 0.0f);

    int nthreads = 1;
#ifdef _OPENMP
    nthreads = omp_get_max_threads();
#endif
    std::vector<ThreadCtx> ctx(static_cast<size_t>(nthreads));
    for (auto& c : ctx) {
        c.ws.resize(model.layout);
        c.grad.assign(static_cast<size_t>(total), 0.0f);
        c.img.assign(static_cast<size_t>(data.images.pixels_per_image()), 0.0f);
        c.dlogits.assign(static_cast<size_t>(mc.classes), 0.0f);
    }

    std::vector<float> snapshot = model.theta; // last good epoch
    std::vector<int> order(static_cast<size_t>(n));
    TrainResult res;
    int64_t step = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double t0 = now_s();
        for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
        std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, static_cast<uint64_t>(epoch)));
        for (int i = n - 1; i > 0; --i) {
            std::uniform_int_distribution<int> d(0, i);
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(d(shuffle_rng))]);
        }

        double epoch_loss = 0.0;
        bool bad = false;
        std::string fatal;

        for (int b = 0; b < batches && !bad; ++b) {
            const int lo = b * cfg.batch_size;
            const int hi = std::min(n, lo + cfg.batch_size);
            const int bs = hi - lo;
            std::fill(grad.begin(), grad.end(), 0.0f);
            double loss_sum = 0.0;

#ifdef _OPENMP
#pragma omp parallel for ordered schedule(static, 1)
#endif
            for (int bi = 0; bi < bs; ++bi) {
                int tid = 0;
#ifdef _OPENMP
                tid = omp_get_thread_num();
#endif
                ThreadCtx& c = ctx[static_cast<size_t>(tid)];
                const int idx = order[static_cast<size_t>(lo + bi)];
                double sample_loss = std::numeric_limits<double>::quiet_NaN();
                bool ok = false;
                try {
                    std::copy_n(data.images.image(idx), c.img.size(), c.img.data());
                    if (train_defense && train_defense->kind != defenses::DefenseKind::none)
                        defenses::apply_defense_inplace(
                            c.img, data.images.h, data.images.w, data.images.c, *train_defense,
                            derive_seed(derive_seed(cfg.seed, static_cast<uint64_t>(epoch)),
                                        static_cast<uint64_t>(idx)));
                    std::fill(c.grad.begin(), c.grad.end(), 0.0f);
                    models::model_forward(model, c.img.data(), c.ws);
                    sample_loss = cross_entropy_backward<float>(
                        {c.ws.logits.data(), c.ws.logits.size()},
                        data.labels[static_cast<size_t>(idx)],
                        {c.dlogits.data(), c.dlogits.size()});
                    models::model_backward(model, c.ws, c.dlogits.data(), c.grad.data());
                    ok = true;
                } catch (const numeric_error&) {
                    ok = false;
                } catch (const std::exception& ex) {
#ifdef _OPENMP
#pragma omp critical
#endif
                    if (fatal.empty()) fatal = ex.what();
                }
#ifdef _OPENMP
#pragma omp ordered
#endif
                {
                    // accumulate in sample order so results do not depend on
                    // the number of threads
                    if (ok) {
                        for (int64_t i = 0; i < total; ++i)
                            grad[static_cast<size_t>(i)] += c.grad[static_cast<size_t>(i)];
                        loss_sum += sample_loss;
                    } else {
                        loss_sum = std::numeric_limits<double>::quiet_NaN();
                    }
                }
            }
            if (!fatal.empty()) throw config_error("train: " + fatal);
            if (!std::isfinite(loss_sum)) {
                bad = true;
                break;
            }

            const float inv_bs = 1.0f / static_cast<float>(bs);
            for (int64_t i = 0; i < total; ++i) grad[static_cast<size_t>(i)] *= inv_bs;

            if (cfg.grad_clip > 0.0) {
                double norm2 = 0.0;
                for (int64_t i = 0; i < total; ++i) {
                    const double g = grad[static_cast<size_t>(i)];
                    norm2 += g * g;
                }
                const double norm = std::sqrt(norm2);
                if (norm > cfg.grad_clip) {
                    const float scale = static_cast<float>(cfg.grad_clip / norm);
                    for (int64_t i = 0; i < total; ++i) grad[static_cast<size_t>(i)] *= scale;
                }
            }

            const double lr = lr_at_step(cfg, step, total_steps);
            const double b1 = cfg.beta1, b2 = cfg.beta2;
            const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step + 1));
            const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step + 1));
            for (int64_t i = 0; i < total; ++i) {
                const size_t s = static_cast<size_t>(i);
                const double g = grad[s];
                m1[s] = static_cast<float>(b1 * m1[s] + (1.0 - b1) * g);
                m2[s] = static_cast<float>(b2 * m2[s] + (1.0 - b2) * g * g);
                const double mh = m1[s] / bc1;
                const double vh = m2[s] / bc2;
                model.theta[s] -= static_cast<float>(
                    lr * (mh / (std::sqrt(vh) + cfg.adam_eps) + cfg.weight_decay * model.theta[s]));
            }
            ++step;
            epoch_loss += loss_sum / bs;
            res.step_losses.push_back(loss_sum / bs);
        }

        if (bad) {
            model.theta = snapshot; // abort with the last good parameters
            res.diverged = true;
            res.steps = step;
            EpochRecord rec;
            rec.epoch = epoch;
            rec.split = "train";
            rec.wall_s = now_s() - t0;
            res.log.push_back(rec);
            return res;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.split = "train";
        rec.loss = epoch_loss / batches;
        rec.wall_s = now_s() - t0;
        res.log.push_back(rec);

        if (hook && cfg.log_eval_limit > 0) {
            const double e0 = now_s();
            const EvalMetrics em = hook(model, cfg.log_eval_limit);
            EpochRecord ev;
            ev.epoch = epoch;
            ev.split = "eval";
            ev.acc = em.acc;
            ev.asr = em.asr;
            ev.wall_s = now_s() - e0;
            res.log.push_back(ev);
        }
        snapshot = model.theta;
    }
    res.steps = step;
    return res;
}

void write_train_log(const std::string& path, std::span<const EpochRecord> log) {
    std::ofstream f(path);
    if (!f) throw data_format_error("cannot open train log for writing: " + path);
    auto field = [](double v) {
        if (std::isnan(v)) return std::string("null");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        return std::string(buf);
    };
    for (const auto& r : log)
        f << "{\"epoch\":" << r.epoch << ",\"split\":\"" << r.split
          << "\",\"loss\":" << field(r.loss) << ",\"acc\":" << field(r.acc)
          << ",\"asr\":" << field(r.asr) << ",\"wall_s\":" << field(r.wall_s) << "}\n";
}

} // namespace vsslab::training
