// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vsslab/defense.hpp"
#include "vsslab/image.hpp"
#include "vsslab/model.hpp"

namespace vsslab::training {

// Softmax cross-entropy. Identical formula for clean and poisoned samples;
// the attack enters only through dataset composition.
template <typename T>
T cross_entropy(std::span<const T> logits, int label) {
    if (label < 0 || label >= static_cast<int>(logits.size()))
        throw dim_error("cross_entropy: label out of range");
    if (!all_finite(logits)) throw numeric_error("cross_entropy: non-finite logits");
    T mx = logits[0];
    for (T v : logits) mx = std::max(mx, v);
    T sum = T(0);
    for (T v : logits) sum += std::exp(v - mx);
    return mx + std::log(sum) - logits[static_cast<size_t>(label)];
}

// Returns the loss and writes d(loss)/d(logits) = softmax - onehot.
template <typename T>
T cross_entropy_backward(std::span<const T> logits, int label, std::span<T> dlogits) {
    const T loss = cross_entropy(logits, label);
    T mx = logits[0];
    for (T v : logits) mx = std::max(mx, v);
    T sum = T(0);
    for (T v : logits) sum += std::exp(v - mx);
    for (size_t j = 0; j < logits.size(); ++j)
        dlogits[j] = std::exp(logits[j] - mx) / sum;
    dlogits[static_cast<size_t>(label)] -= T(1);
    return loss;
}

struct TrainConfig {
    int epochs = 20;
    int batch_size = 64;
    double base_lr = 1e-3;
    double warmup_lr = 1e-5;
    int warmup_steps = 200;
    double weight_decay = 1e-8;
    double beta1 = 0.9; // optimizer momentum
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 1.0; // global norm, <= 0 disables
    uint64_t seed = 1;
    defenses::Placement placement = defenses::Placement::none;
    int log_eval_limit = 256; // samples per epoch for the logged ACC/ASR, 0 = off

    void validate() const {
        if (epochs <= 0 || batch_size <= 0)
            throw config_error("train config: epochs and batch size must be positive");
        if (base_lr < 0.0 || warmup_lr < 0.0)
            throw config_error("train config: learning rates must be non-negative");
        if (warmup_steps < 0) throw config_error("train config: warmup_steps must be >= 0");
    }
};

// Linear warmup from warmup_lr to base_lr, then cosine decay to zero.
double lr_at_step(const TrainConfig& cfg, int64_t step, int64_t total_steps);

struct EpochRecord {
    int epoch = 0;
    std::string split; // "train" or "eval"
    double loss = std::numeric_limits<double>::quiet_NaN();
    double acc = std::numeric_limits<double>::quiet_NaN();
    double asr = std::numeric_limits<double>::quiet_NaN();
    double wall_s = 0.0;
};

struct EvalMetrics {
    double acc = std::numeric_limits<double>::quiet_NaN();
    double asr = std::numeric_limits<double>::quiet_NaN();
};

// Periodic evaluation callback; wired up by the harness so the trainer
// stays independent of metric code.
using EvalHook = std::function<EvalMetrics(const models::ModelState<float>&, int limit)>;

struct TrainResult {
    bool diverged = false;
    int64_t steps = 0;
    std::vector<EpochRecord> log;
    std::vector<double> step_losses; // mean batch loss per optimizer step
};

// Decoupled-weight-decay Adam over shuffled batches. Deterministic given
// (config, dataset, seed): per-sample work is accumulated in sample order
// regardless of the OpenMP thread count. On a non-finite loss the model is
// rolled back to the end of the last good epoch and `diverged` is set.
TrainResult train(models::ModelState<float>& model, const Dataset& train_set,
                  const TrainConfig& cfg,
                  const defenses::DefenseSpec* train_defense = nullptr,
                  const EvalHook& hook = nullptr);

void write_train_log(const std::string& path, std::span<const EpochRecord> log);

// ---- checkpoints -----------------------------------------------------------
// Self-describing binary container: magic, JSON config record, then named
// parameter tensors. Round-trips bit-exactly.

struct CheckpointMeta {
    uint64_t seed = 0;
    int64_t step = 0;
};

void checkpoint_save(const models::ModelState<float>& m, const std::string& path,
                     const CheckpointMeta& meta);

// Returns the restored model; throws data_format_error on malformed input
// without touching any caller state.
models::ModelState<float> checkpoint_load(const std::string& path, CheckpointMeta* meta = nullptr);

} // namespace vsslab::training
