// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0

#include "vsslab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vsslab::harness {

void ExperimentConfig::validate() const {
    model.validate();
    train.validate();
    if (repetitions < 1) throw config_error("experiment: repetitions must be >= 1");
    if (poison_rate < 0.0 || poison_rate > 1.0)
        throw config_error("experiment: poison rate must be in [0,1]");
    if (dataset.source != "cifar10" && dataset.source != "synthetic")
        throw config_error("experiment: unknown dataset source: " + dataset.source);
}

// ---- JSON ------------------------------------------------------------------

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys,
                    const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : keys)
            if (it.key() == k) { known = true; break; }
        if (!known)
            throw config_error(std::string("unknown key in ") + where + ": " + it.key());
    }
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

attacks::Anchor anchor_from_name(const std::string& s) {
    if (s == "bottom_right") return attacks::Anchor::bottom_right;
    if (s == "bottom_left") return attacks::Anchor::bottom_left;
    if (s == "top_right") return attacks::Anchor::top_right;
    if (s == "top_left") return attacks::Anchor::top_left;
    throw config_error("unknown trigger anchor: " + s);
}

const char* anchor_name(attacks::Anchor a) {
    switch (a) {
        case attacks::Anchor::bottom_right: return "bottom_right";
        case attacks::Anchor::bottom_left: return "bottom_left";
        case attacks::Anchor::top_right: return "top_right";
        case attacks::Anchor::top_left: return "top_left";
    }
    return "bottom_right";
}

} // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
    reject_unknown(j, {"name", "dataset", "model", "trigger", "poison_rate", "defense",
                       "defense_placement", "train", "repetitions", "seed", "output_dir",
                       "sweep"},
                   "experiment config");
    ExperimentConfig c;
    get_if(j, "name", c.name);
    get_if(j, "poison_rate", c.poison_rate);
    get_if(j, "repetitions", c.repetitions);
    get_if(j, "seed", c.seed);
    get_if(j, "output_dir", c.output_dir);

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        reject_unknown(d, {"source", "path", "train_limit", "test_limit", "n_train",
                           "n_test", "classes", "h", "w", "c", "seed"},
                       "dataset config");
        get_if(d, "source", c.dataset.source);
        get_if(d, "path", c.dataset.path);
        get_if(d, "train_limit", c.dataset.train_limit);
        get_if(d, "test_limit", c.dataset.test_limit);
        get_if(d, "n_train", c.dataset.n_train);
        get_if(d, "n_test", c.dataset.n_test);
        get_if(d, "classes", c.dataset.classes);
        get_if(d, "h", c.dataset.h);
        get_if(d, "w", c.dataset.w);
        get_if(d, "c", c.dataset.c);
        get_if(d, "seed", c.dataset.seed);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown(m, {"family", "depth", "dim", "expand", "state_dim", "patch",
                           "classes", "image_h", "image_w", "image_c", "conv_width"},
                       "model config");
        if (m.contains("family"))
            c.model.family = models::family_from_name(m.at("family").get<std::string>());
        get_if(m, "depth", c.model.depth);
        get_if(m, "dim", c.model.dim);
        get_if(m, "expand", c.model.expand);
        get_if(m, "state_dim", c.model.state_dim);
        get_if(m, "patch", c.model.patch);
        get_if(m, "classes", c.model.classes);
        get_if(m, "image_h", c.model.image_h);
        get_if(m, "image_w", c.model.image_w);
        get_if(m, "image_c", c.model.image_c);
        get_if(m, "conv_width", c.model.conv_width);
    }
    if (j.contains("trigger")) {
        const auto& t = j.at("trigger");
        reject_unknown(t, {"kind", "target_class", "patch_h", "patch_w", "anchor", "alpha",
                           "patch_size", "gap", "intensity"},
                       "trigger config");
        if (t.contains("kind"))
            c.trigger.kind = attacks::trigger_kind_from_name(t.at("kind").get<std::string>());
        get_if(t, "target_class", c.trigger.target_class);
        get_if(t, "patch_h", c.trigger.patch_h);
        get_if(t, "patch_w", c.trigger.patch_w);
        if (t.contains("anchor"))
            c.trigger.anchor = anchor_from_name(t.at("anchor").get<std::string>());
        get_if(t, "alpha", c.trigger.alpha);
        get_if(t, "patch_size", c.trigger.patch_size);
        get_if(t, "gap", c.trigger.gap);
        get_if(t, "intensity", c.trigger.intensity);
    }
    if (j.contains("defense")) {
        const auto& d = j.at("defense");
        reject_unknown(d, {"kind", "patch_size", "drop_rate", "seed"}, "defense config");
        if (d.contains("kind"))
            c.defense.kind = defenses::defense_kind_from_name(d.at("kind").get<std::string>());
        get_if(d, "patch_size", c.defense.patch_size);
        get_if(d, "drop_rate", c.defense.drop_rate);
        get_if(d, "seed", c.defense.seed);
    }
    if (j.contains("defense_placement"))
        c.placement = defenses::placement_from_name(j.at("defense_placement").get<std::string>());
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown(t, {"epochs", "batch_size", "base_lr", "warmup_lr", "warmup_steps",
                           "weight_decay", "beta1", "beta2", "grad_clip", "log_eval_limit"},
                       "train config");
        get_if(t, "epochs", c.train.epochs);
        get_if(t, "batch_size", c.train.batch_size);
        get_if(t, "base_lr", c.train.base_lr);
        get_if(t, "warmup_lr", c.train.warmup_lr);
        get_if(t, "warmup_steps", c.train.warmup_steps);
        get_if(t, "weight_decay", c.train.weight_decay);
        get_if(t, "beta1", c.train.beta1);
        get_if(t, "beta2", c.train.beta2);
        get_if(t, "grad_clip", c.train.grad_clip);
        get_if(t, "log_eval_limit", c.train.log_eval_limit);
    }
    c.train.placement = c.placement;
    c.validate();
    return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["name"] = c.name;
    j["dataset"] = {{"source", c.dataset.source},     {"path", c.dataset.path},
                    {"train_limit", c.dataset.train_limit}, {"test_limit", c.dataset.test_limit},
                    {"n_train", c.dataset.n_train},   {"n_test", c.dataset.n_test},
                    {"classes", c.dataset.classes},   {"h", c.dataset.h},
                    {"w", c.dataset.w},               {"c", c.dataset.c},
                    {"seed", c.dataset.seed}};
    j["model"] = {{"family", models::family_name(c.model.family)},
                  {"depth", c.model.depth},
                  {"dim", c.model.dim},
                  {"expand", c.model.expand},
                  {"state_dim", c.model.state_dim},
                  {"patch", c.model.patch},
                  {"classes", c.model.classes},
                  {"image_h", c.model.image_h},
                  {"image_w", c.model.image_w},
                  {"image_c", c.model.image_c},
                  {"conv_width", c.model.conv_width}};
    j["trigger"] = {{"kind", attacks::trigger_kind_name(c.trigger.kind)},
                    {"target_class", c.trigger.target_class},
                    {"patch_h", c.trigger.patch_h},
                    {"patch_w", c.trigger.patch_w},
                    {"anchor", anchor_name(c.trigger.anchor)},
                    {"alpha", c.trigger.alpha},
                    {"patch_size", c.trigger.patch_size},
                    {"gap", c.trigger.gap},
                    {"intensity", c.trigger.intensity}};
    j["poison_rate"] = c.poison_rate;
    j["defense"] = {{"kind", defenses::defense_kind_name(c.defense.kind)},
                    {"patch_size", c.defense.patch_size},
                    {"drop_rate", c.defense.drop_rate},
                    {"seed", c.defense.seed}};
    j["defense_placement"] = defenses::placement_name(c.placement);
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"base_lr", c.train.base_lr},
                  {"warmup_lr", c.train.warmup_lr},
                  {"warmup_steps", c.train.warmup_steps},
                  {"weight_decay", c.train.weight_decay},
                  {"beta1", c.train.beta1},
                  {"beta2", c.train.beta2},
                  {"grad_clip", c.train.grad_clip},
                  {"log_eval_limit", c.train.log_eval_limit}};
    j["repetitions"] = c.repetitions;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    return j;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw config_error(std::string("malformed config JSON: ") + ex.what());
    }
    return config_from_json(j);
}

std::string config_digest(const ExperimentConfig& cfg) {
    const uint64_t h = fnv1a64(config_to_json(cfg).dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---- data ------------------------------------------------------------------

SplitPair load_dataset(const DatasetConfig& cfg) {
    SplitPair out;
    if (cfg.source == "cifar10") {
        data::CifarPair p = data::ingest_cifar10_binary(cfg.path);
        out.train = std::move(p.train);
        out.test = std::move(p.test);
    } else if (cfg.source == "synthetic") {
        out.train = data::make_synthetic(cfg.n_train, cfg.classes, cfg.h, cfg.w, cfg.c,
                                         derive_seed(cfg.seed, 0));
        out.test = data::make_synthetic(cfg.n_test, cfg.classes, cfg.h, cfg.w, cfg.c,
                                        derive_seed(cfg.seed, 1));
    } else {
        throw config_error("unknown dataset source: " + cfg.source);
    }
    out.train = data::subset(out.train, cfg.train_limit);
    out.test = data::subset(out.test, cfg.test_limit);
    return out;
}

// ---- evaluation ------------------------------------------------------------

namespace {

// Shared prediction loop. `transform` prepares a private copy of each image
// (trigger and/or defense); `counts` op decides what to tally.
template <typename Prep, typename Count>
void predict_loop(const models::ModelState<float>& model, const Dataset& test, int limit,
                  Prep&& prep, Count&& count) {
    const int n = limit > 0 ? std::min(limit, test.size()) : test.size();
    int nthreads = 1;
#ifdef _OPENMP
    nthreads = omp_get_max_threads();
#endif
    std::vector<models::Workspace<float>> ws(static_cast<size_t>(nthreads));
    for (auto& w : ws) w.resize(model.layout);
    std::vector<std::vector<float>> img(static_cast<size_t>(nthreads));
    for (auto& b : img) b.resize(static_cast<size_t>(test.images.pixels_per_image()));

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < n; ++i) {
        int tid = 0;
#ifdef _OPENMP
        tid = omp_get_thread_num();
#endif
        auto& w = ws[static_cast<size_t>(tid)];
        auto& buf = img[static_cast<size_t>(tid)];
        if (!prep(i, buf)) continue;
        models::model_forward(model, buf.data(), w);
        int arg = 0;
        for (size_t j = 1; j < w.logits.size(); ++j)
            if (w.logits[j] > w.logits[static_cast<size_t>(arg)]) arg = static_cast<int>(j);
        count(i, arg);
    }
}

} // namespace

double eval_acc(const models::ModelState<float>& model, const Dataset& test,
                const defenses::DefenseSpec* defense, int limit) {
    if (test.size() == 0) throw config_error("eval_acc: empty test set");
    std::vector<char> correct(static_cast<size_t>(test.size()), 0);
    std::vector<char> used(static_cast<size_t>(test.size()), 0);
    predict_loop(
        model, test, limit,
        [&](int i, std::vector<float>& buf) {
            std::copy_n(test.images.image(i), buf.size(), buf.data());
            if (defense && defense->kind != defenses::DefenseKind::none)
                defenses::apply_defense_inplace(buf, test.images.h, test.images.w,
                                                test.images.c, *defense,
                                                derive_seed(defense->seed, static_cast<uint64_t>(i)));
            used[static_cast<size_t>(i)] = 1;
            return true;
        },
        [&](int i, int pred) {
            correct[static_cast<size_t>(i)] = pred == test.labels[static_cast<size_t>(i)] ? 1 : 0;
        });
    int64_t num = 0, den = 0;
    for (size_t i = 0; i < used.size(); ++i) {
        den += used[i];
        num += correct[i];
    }
    if (den == 0) throw config_error("eval_acc: no samples evaluated");
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

double eval_asr(const models::ModelState<float>& model, const Dataset& test,
                const attacks::TriggerSpec& trigger, const defenses::DefenseSpec* defense,
                int limit) {
    if (test.size() == 0) throw config_error("eval_asr: empty test set");
    if (trigger.kind == attacks::TriggerKind::none)
        throw config_error("eval_asr: trigger spec required");
    std::vector<char> hit(static_cast<size_t>(test.size()), 0);
    std::vector<char> used(static_cast<size_t>(test.size()), 0);
    predict_loop(
        model, test, limit,
        [&](int i, std::vector<float>& buf) {
            if (test.labels[static_cast<size_t>(i)] == trigger.target_class) return false;
            std::copy_n(test.images.image(i), buf.size(), buf.data());
            attacks::apply_trigger_inplace(buf, test.images.h, test.images.w,
                                           test.images.c, trigger);
            if (defense && defense->kind != defenses::DefenseKind::none)
                defenses::apply_defense_inplace(buf, test.images.h, test.images.w,
                                                test.images.c, *defense,
                                                derive_seed(defense->seed, static_cast<uint64_t>(i)));
            used[static_cast<size_t>(i)] = 1;
            return true;
        },
        [&](int i, int pred) {
            hit[static_cast<size_t>(i)] = pred == trigger.target_class ? 1 : 0;
        });
    int64_t num = 0, den = 0;
    for (size_t i = 0; i < used.size(); ++i) {
        den += used[i];
        num += hit[i];
    }
    if (den == 0) throw config_error("eval_asr: no non-target samples in range");
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

// ---- experiment ------------------------------------------------------------

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = std::numeric_limits<double>::quiet_NaN();
    sd = 0.0;
    if (xs.empty()) return;
    double s = 0.0;
    for (double x : xs) s += x;
    mean = s / static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - mean) * (x - mean);
    sd = std::sqrt(v / static_cast<double>(xs.size()));
}

} // namespace

MetricsReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const SplitPair split = load_dataset(cfg.dataset);

    MetricsReport rep;
    rep.name = cfg.name;
    rep.attack = attacks::trigger_kind_name(cfg.trigger.kind);
    rep.model = models::family_name(cfg.model.family);
    rep.seed = cfg.seed;
    rep.config_digest = config_digest(cfg);
    rep.provenance = std::string("vsslab ") + kVersion + " cfg=" + rep.config_digest +
                     " seed=" + std::to_string(cfg.seed);

    const bool attacked = cfg.trigger.kind != attacks::TriggerKind::none;
    const bool defended = cfg.defense.kind != defenses::DefenseKind::none &&
                          (cfg.placement == defenses::Placement::eval ||
                           cfg.placement == defenses::Placement::both);
    const bool train_defended = cfg.defense.kind != defenses::DefenseKind::none &&
                                (cfg.placement == defenses::Placement::train ||
                                 cfg.placement == defenses::Placement::both);

    for (int r = 0; r < cfg.repetitions; ++r) {
        RepMetrics rm;
        rm.rep = r;
        rm.seed = derive_seed(cfg.seed, static_cast<uint64_t>(r));
        try {
            Dataset train_set = split.train;
            if (attacked && cfg.poison_rate > 0.0) {
                const attacks::PoisonPlan plan = attacks::select_poison_indices(
                    train_set.labels, cfg.poison_rate, cfg.trigger.target_class, rm.seed);
                train_set = attacks::poison_dataset(train_set, cfg.trigger, plan).poisoned;
            }

            models::ModelConfig mc = cfg.model;
            mc.seed = rm.seed;
            mc.classes = split.train.num_classes;
            mc.image_h = split.train.images.h;
            mc.image_w = split.train.images.w;
            mc.image_c = split.train.images.c;
            models::ModelState<float> model = models::make_model<float>(mc);

            training::TrainConfig tc = cfg.train;
            tc.seed = rm.seed;
            training::EvalHook hook;
            if (tc.log_eval_limit > 0) {
                hook = [&](const models::ModelState<float>& m, int lim) {
                    training::EvalMetrics em;
                    em.acc = eval_acc(m, split.test, nullptr, lim);
                    if (attacked) em.asr = eval_asr(m, split.test, cfg.trigger, nullptr, lim);
                    return em;
                };
            }
            const training::TrainResult tr = training::train(
                model, train_set, tc, train_defended ? &cfg.defense : nullptr, hook);
            rm.diverged = tr.diverged;
            if (tr.diverged) {
                rm.error = "training diverged (non-finite loss)";
            } else {
                rm.acc = eval_acc(model, split.test, nullptr, cfg.dataset.test_limit);
                if (attacked)
                    rm.asr = eval_asr(model, split.test, cfg.trigger, nullptr,
                                      cfg.dataset.test_limit);
                if (defended) {
                    rm.acc_defended =
                        eval_acc(model, split.test, &cfg.defense, cfg.dataset.test_limit);
                    if (attacked)
                        rm.asr_defended = eval_asr(model, split.test, cfg.trigger,
                                                   &cfg.defense, cfg.dataset.test_limit);
                }
            }
        } catch (const std::exception& ex) {
            rm.error = ex.what();
        }
        rep.reps.push_back(std::move(rm));
    }

    std::vector<double> accs, asrs, daccs, dasrs;
    for (const auto& r : rep.reps) {
        if (!r.error.empty()) continue;
        if (std::isfinite(r.acc)) accs.push_back(r.acc);
        if (std::isfinite(r.asr)) asrs.push_back(r.asr);
        if (std::isfinite(r.acc_defended)) daccs.push_back(r.acc_defended);
        if (std::isfinite(r.asr_defended)) dasrs.push_back(r.asr_defended);
    }
    mean_std(accs, rep.acc_mean, rep.acc_std);
    mean_std(asrs, rep.asr_mean, rep.asr_std);
    mean_std(daccs, rep.acc_def_mean, rep.acc_def_std);
    mean_std(dasrs, rep.asr_def_mean, rep.asr_def_std);
    return rep;
}

// ---- reports ---------------------------------------------------------------

namespace {

nlohmann::json metric_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

double metric_from(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null())
        return std::numeric_limits<double>::quiet_NaN();
    return j.at(key).get<double>();
}

} // namespace

void emit_report(const MetricsReport& rep, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw data_format_error("cannot open report for writing: " + path);
    for (const auto& r : rep.reps) {
        nlohmann::json j = {{"type", "rep"},
                            {"rep", r.rep},
                            {"seed", r.seed},
                            {"acc", metric_or_null(r.acc)},
                            {"asr", metric_or_null(r.asr)},
                            {"acc_defended", metric_or_null(r.acc_defended)},
                            {"asr_defended", metric_or_null(r.asr_defended)},
                            {"diverged", r.diverged},
                            {"error", r.error}};
        f << j.dump() << '\n';
    }
    nlohmann::json s = {{"type", "summary"},
                        {"name", rep.name},
                        {"attack", rep.attack},
                        {"model", rep.model},
                        {"acc_mean", metric_or_null(rep.acc_mean)},
                        {"acc_std", rep.acc_std},
                        {"asr_mean", metric_or_null(rep.asr_mean)},
                        {"asr_std", rep.asr_std},
                        {"acc_def_mean", metric_or_null(rep.acc_def_mean)},
                        {"acc_def_std", rep.acc_def_std},
                        {"asr_def_mean", metric_or_null(rep.asr_def_mean)},
                        {"asr_def_std", rep.asr_def_std},
                        {"seed", rep.seed},
                        {"config_digest", rep.config_digest},
                        {"provenance", rep.provenance}};
    f << s.dump() << '\n';
    if (!f) throw data_format_error("report write failed: " + path);
}

MetricsReport parse_report(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw data_format_error("cannot open report: " + path);
    MetricsReport rep;
    std::string line;
    bool have_summary = false;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& ex) {
            throw data_format_error(std::string("malformed report line: ") + ex.what());
        }
        const std::string type = j.value("type", "");
        if (type == "rep") {
            RepMetrics r;
            r.rep = j.at("rep").get<int>();
            r.seed = j.at("seed").get<uint64_t>();
            r.acc = metric_from(j, "acc");
            r.asr = metric_from(j, "asr");
            r.acc_defended = metric_from(j, "acc_defended");
            r.asr_defended = metric_from(j, "asr_defended");
            r.diverged = j.value("diverged", false);
            r.error = j.value("error", "");
            rep.reps.push_back(std::move(r));
        } else if (type == "summary") {
            rep.name = j.value("name", "");
            rep.attack = j.value("attack", "");
            rep.model = j.value("model", "");
            rep.acc_mean = metric_from(j, "acc_mean");
            rep.acc_std = j.value("acc_std", 0.0);
            rep.asr_mean = metric_from(j, "asr_mean");
            rep.asr_std = j.value("asr_std", 0.0);
            rep.acc_def_mean = metric_from(j, "acc_def_mean");
            rep.acc_def_std = j.value("acc_def_std", 0.0);
            rep.asr_def_mean = metric_from(j, "asr_def_mean");
            rep.asr_def_std = j.value("asr_def_std", 0.0);
            rep.seed = j.value("seed", uint64_t(0));
            rep.config_digest = j.value("config_digest", "");
            rep.provenance = j.value("provenance", "");
            have_summary = true;
        } else {
            throw data_format_error("unknown report record type: " + type);
        }
    }
    if (!have_summary) throw data_format_error("report has no summary record: " + path);
    return rep;
}

std::string render_table(std::span<const MetricsReport> reports) {
    std::ostringstream os;
    os << "attack,model,acc_mean,acc_std,asr_mean,asr_std\n";
    auto cell = [](double v) {
        if (!std::isfinite(v)) return std::string();
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return std::string(buf);
    };
    for (const auto& r : reports) {
        os << r.attack << ',' << r.model << ',' << cell(r.acc_mean) << ',' << cell(r.acc_std)
           << ',' << cell(r.asr_mean) << ',' << cell(r.asr_std) << '\n';
        if (std::isfinite(r.acc_def_mean) || std::isfinite(r.asr_def_mean)) {
            os << r.attack << "+defense," << r.model << ',' << cell(r.acc_def_mean) << ','
               << cell(r.acc_def_std) << ',' << cell(r.asr_def_mean) << ','
               << cell(r.asr_def_std) << '\n';
        }
    }
    return os.str();
}

} // namespace vsslab::harness
