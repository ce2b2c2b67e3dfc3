// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Batch CLI for the backdoor-robustness lab: poison datasets, train and
// evaluate classifiers, apply patch defenses, run full seeded experiments
// and render CSV summaries.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vsslab/harness.hpp"

namespace fs = std::filesystem;
using namespace vsslab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDataFormat = 3;
constexpr int kExitNumeric = 4;

struct CommonOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
    int threads = 0;
};

harness::ExperimentConfig load_config(const CommonOpts& o) {
    harness::ExperimentConfig cfg = harness::load_config_file(o.config_path);
    if (o.seed) cfg.seed = *o.seed;
    return cfg;
}

void apply_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw data_format_error("cannot create output directory: " + dir);
}

int cmd_poison(const CommonOpts& o, const std::string& out_dir) {
    harness::ExperimentConfig cfg = load_config(o);
    if (cfg.trigger.kind == attacks::TriggerKind::none)
        throw config_error("poison: config has no trigger");
    ensure_dir(out_dir);
    harness::SplitPair split = harness::load_dataset(cfg.dataset);
    const attacks::PoisonPlan plan = attacks::select_poison_indices(
        split.train.labels, cfg.poison_rate, cfg.trigger.target_class, cfg.seed);
    const attacks::PoisonResult res = attacks::poison_dataset(split.train, cfg.trigger, plan);
    data::write_cifar_binary((fs::path(out_dir) / "train.bin").string(), res.poisoned);
    attacks::write_manifest_file((fs::path(out_dir) / "manifest.txt").string(), res.manifest);
    std::cout << "poisoned " << res.manifest.size() << " of " << split.train.size()
              << " samples -> " << out_dir << "\n";
    return kExitOk;
}

int cmd_train(const CommonOpts& o, const std::string& out_dir) {
    harness::ExperimentConfig cfg = load_config(o);
    ensure_dir(out_dir);
    harness::SplitPair split = harness::load_dataset(cfg.dataset);

    Dataset train_set = split.train;
    if (cfg.trigger.kind != attacks::TriggerKind::none && cfg.poison_rate > 0.0) {
        const attacks::PoisonPlan plan = attacks::select_poison_indices(
            train_set.labels, cfg.poison_rate, cfg.trigger.target_class, cfg.seed);
        const attacks::PoisonResult res = attacks::poison_dataset(train_set, cfg.trigger, plan);
        train_set = res.poisoned;
        attacks::write_manifest_file((fs::path(out_dir) / "manifest.txt").string(), res.manifest);
    }

    models::ModelConfig mc = cfg.model;
    mc.seed = cfg.seed;
    mc.classes = split.train.num_classes;
    mc.image_h = split.train.images.h;
    mc.image_w = split.train.images.w;
    mc.image_c = split.train.images.c;
    models::ModelState<float> model = models::make_model<float>(mc);

    training::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const bool train_def = cfg.defense.kind != defenses::DefenseKind::none &&
                           (cfg.placement == defenses::Placement::train ||
                            cfg.placement == defenses::Placement::both);
    training::EvalHook hook;
    if (tc.log_eval_limit > 0) {
        hook = [&](const models::ModelState<float>& m, int lim) {
            training::EvalMetrics em;
            em.acc = harness::eval_acc(m, split.test, nullptr, lim);
            if (cfg.trigger.kind != attacks::TriggerKind::none)
                em.asr = harness::eval_asr(m, split.test, cfg.trigger, nullptr, lim);
            return em;
        };
    }
    const training::TrainResult tr =
        training::train(model, train_set, tc, train_def ? &cfg.defense : nullptr, hook);
    training::checkpoint_save(model, (fs::path(out_dir) / "checkpoint.bin").string(),
                              {cfg.seed, tr.steps});
    training::write_train_log((fs::path(out_dir) / "train_log.jsonl").string(), tr.log);
    if (tr.diverged) {
        std::cerr << "training diverged; last good checkpoint written to " << out_dir << "\n";
        return kExitNumeric;
    }
    std::cout << "trained " << tr.steps << " steps -> " << out_dir << "\n";
    return kExitOk;
}

int cmd_eval(const CommonOpts& o, const std::string& ckpt) {
    harness::ExperimentConfig cfg = load_config(o);
    harness::SplitPair split = harness::load_dataset(cfg.dataset);
    const models::ModelState<float> model = training::checkpoint_load(ckpt);
    const bool defended = cfg.defense.kind != defenses::DefenseKind::none &&
                          (cfg.placement == defenses::Placement::eval ||
                           cfg.placement == defenses::Placement::both);

    char buf[64];
    const double acc = harness::eval_acc(model, split.test, nullptr, cfg.dataset.test_limit);
    std::snprintf(buf, sizeof(buf), "acc %.2f", acc);
    std::cout << buf << "\n";
    if (cfg.trigger.kind != attacks::TriggerKind::none) {
        const double asr =
            harness::eval_asr(model, split.test, cfg.trigger, nullptr, cfg.dataset.test_limit);
        std::snprintf(buf, sizeof(buf), "asr %.2f", asr);
        std::cout << buf << "\n";
    }
    if (defended) {
        const double acc_d =
            harness::eval_acc(model, split.test, &cfg.defense, cfg.dataset.test_limit);
        std::snprintf(buf, sizeof(buf), "acc_defended %.2f", acc_d);
        std::cout << buf << "\n";
        if (cfg.trigger.kind != attacks::TriggerKind::none) {
            const double asr_d = harness::eval_asr(model, split.test, cfg.trigger,
                                                   &cfg.defense, cfg.dataset.test_limit);
            std::snprintf(buf, sizeof(buf), "asr_defended %.2f", asr_d);
            std::cout << buf << "\n";
        }
    }
    return kExitOk;
}

int cmd_defend(const CommonOpts& o, const std::string& in_path, const std::string& out_path) {
    harness::ExperimentConfig cfg = load_config(o);
    if (cfg.defense.kind == defenses::DefenseKind::none)
        throw config_error("defend: config has no defense");
    Dataset ds = data::load_cifar_file(in_path);
    defenses::DefenseSpec spec = cfg.defense;
    if (o.seed) spec.seed = *o.seed;
    for (int i = 0; i < ds.size(); ++i)
        defenses::apply_defense_inplace(ds.images.image_span(i), ds.images.h, ds.images.w,
                                        ds.images.c, spec,
                                        derive_seed(spec.seed, static_cast<uint64_t>(i)));
    data::write_cifar_binary(out_path, ds);
    std::cout << "transformed " << ds.size() << " images -> " << out_path << "\n";
    return kExitOk;
}

int cmd_run(const CommonOpts& o) {
    std::ifstream f(o.config_path);
    if (!f) throw config_error("cannot open config file: " + o.config_path);
    nlohmann::json base;
    try {
        f >> base;
    } catch (const nlohmann::json::exception& ex) {
        throw config_error(std::string("malformed config JSON: ") + ex.what());
    }

    std::vector<nlohmann::json> variants;
    if (base.contains("sweep")) {
        const nlohmann::json sweep = base.at("sweep");
        base.erase("sweep");
        if (!sweep.is_array() || sweep.empty())
            throw config_error("sweep must be a non-empty array of override objects");
        int i = 0;
        for (const auto& patch : sweep) {
            nlohmann::json v = base;
            v.merge_patch(patch);
            if (!patch.contains("name"))
                v["name"] = base.value("name", std::string("exp")) + "_" + std::to_string(i);
            variants.push_back(std::move(v));
            ++i;
        }
    } else {
        variants.push_back(base);
    }

    std::vector<harness::MetricsReport> reports;
    std::string out_dir = "out";
    for (const auto& vj : variants) {
        harness::ExperimentConfig cfg = harness::config_from_json(vj);
        if (o.seed) cfg.seed = *o.seed;
        out_dir = cfg.output_dir;
        ensure_dir(cfg.output_dir);
        harness::MetricsReport rep = harness::run_experiment(cfg);
        const std::string rp = (fs::path(cfg.output_dir) / (cfg.name + ".report.jsonl")).string();
        harness::emit_report(rep, rp);
        std::cout << rep.provenance << " -> " << rp << "\n";
        reports.push_back(std::move(rep));
    }
    const std::string csv = harness::render_table(reports);
    const std::string cp = (fs::path(out_dir) / "summary.csv").string();
    std::ofstream cf(cp);
    if (!cf) throw data_format_error("cannot write summary CSV: " + cp);
    cf << csv;
    std::cout << csv;
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& paths, const std::string& out_csv) {
    std::vector<harness::MetricsReport> reports;
    reports.reserve(paths.size());
    for (const auto& p : paths) reports.push_back(harness::parse_report(p));
    const std::string csv = harness::render_table(reports);
    if (!out_csv.empty()) {
        std::ofstream f(out_csv);
        if (!f) throw data_format_error("cannot write summary CSV: " + out_csv);
        f << csv;
    }
    std::cout << csv;
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"vsslab: state-space vs gated-CNN backdoor robustness lab"};
    app.require_subcommand(1);

    CommonOpts opts;
    app.add_option("--threads", opts.threads, "OpenMP thread count (0 = library default)");

    auto add_common = [&](CLI::App* sub, bool need_config = true) {
        if (need_config)
            sub->add_option("--config", opts.config_path, "experiment config JSON")->required();
        sub->add_option("--seed", opts.seed, "override the config seed");
    };

    std::string out_dir = "out", in_path, out_path, ckpt, out_csv;
    std::vector<std::string> report_paths;

    CLI::App* poison = app.add_subcommand("poison", "poison a dataset and write a manifest");
    add_common(poison);
    poison->add_option("--out", out_dir, "output directory");

    CLI::App* train = app.add_subcommand("train", "train one model from a config");
    add_common(train);
    train->add_option("--out", out_dir, "output directory");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint (ACC/ASR)");
    add_common(eval);
    eval->add_option("--checkpoint", ckpt, "checkpoint file")->required();

    CLI::App* defend = app.add_subcommand("defend", "apply a patch defense to a dataset file");
    add_common(defend);
    defend->add_option("--in", in_path, "input .bin dataset")->required();
    defend->add_option("--out", out_path, "output .bin dataset")->required();

    CLI::App* run = app.add_subcommand("run", "run a full experiment (optionally a sweep)");
    add_common(run);

    CLI::App* report = app.add_subcommand("report", "merge report files into a CSV table");
    report->add_option("reports", report_paths, "report .jsonl files")->required();
    report->add_option("--out", out_csv, "CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        apply_threads(opts.threads);
        if (poison->parsed()) return cmd_poison(opts, out_dir);
        if (train->parsed()) return cmd_train(opts, out_dir);
        if (eval->parsed()) return cmd_eval(opts, ckpt);
        if (defend->parsed()) return cmd_defend(opts, in_path, out_path);
        if (run->parsed()) return cmd_run(opts);
        if (report->parsed()) return cmd_report(report_paths, out_csv);
    } catch (const numeric_error& ex) {
        std::cerr << "numeric error: " << ex.what() << "\n";
        return kExitNumeric;
    } catch (const data_format_error& ex) {
        std::cerr << "data format error: " << ex.what() << "\n";
        return kExitDataFormat;
    } catch (const config_error& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return kExitOk;
}
