// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vsslab/attack.hpp"
#include "vsslab/data.hpp"
#include "vsslab/defense.hpp"
#include "vsslab/model.hpp"
#include "vsslab/train.hpp"

namespace vsslab::harness {

inline constexpr const char* kVersion = "0.1.0";

struct DatasetConfig {
    std::string source = "cifar10"; // "cifar10" | "synthetic"
    std::string path;               // cifar10: directory with the binary batches
    int train_limit = 0;            // 0 = all
    int test_limit = 0;
    // synthetic parameters
    int n_train = 2000, n_test = 512, classes = 10;
    int h = 32, w = 32, c = 3;
    uint64_t seed = 7;
};

struct ExperimentConfig {
    std::string name = "exp";
    DatasetConfig dataset;
    models::ModelConfig model;
    attacks::TriggerSpec trigger; // kind none = clean run
    double poison_rate = 0.0;
    defenses::DefenseSpec defense; // kind none = no defense
    defenses::Placement placement = defenses::Placement::none;
    training::TrainConfig train;
    int repetitions = 3;
    uint64_t seed = 1;
    std::string output_dir = "out";

    void validate() const;
};

struct RepMetrics {
    int rep = 0;
    uint64_t seed = 0;
    double acc = std::numeric_limits<double>::quiet_NaN();
    double asr = std::numeric_limits<double>::quiet_NaN();
    double acc_defended = std::numeric_limits<double>::quiet_NaN();
    double asr_defended = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
    std::string error;
};

struct MetricsReport {
    std::string name;
    std::string attack; // trigger kind name
    std::string model;  // family name
    std::vector<RepMetrics> reps;
    double acc_mean = std::numeric_limits<double>::quiet_NaN(), acc_std = 0.0;
    double asr_mean = std::numeric_limits<double>::quiet_NaN(), asr_std = 0.0;
    double acc_def_mean = std::numeric_limits<double>::quiet_NaN(), acc_def_std = 0.0;
    double asr_def_mean = std::numeric_limits<double>::quiet_NaN(), asr_def_std = 0.0;
    uint64_t seed = 0;
    std::string config_digest;
    std::string provenance;
};

// JSON (de)serialization of the experiment description. Unknown keys are
// rejected so typos fail loudly.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config_file(const std::string& path);
std::string config_digest(const ExperimentConfig& cfg);

struct SplitPair {
    Dataset train;
    Dataset test;
};
SplitPair load_dataset(const DatasetConfig& cfg);

// Top-1 accuracy (%) on untriggered data, with an optional eval-time
// defense transform applied first.
double eval_acc(const models::ModelState<float>& model, const Dataset& test,
                const defenses::DefenseSpec* defense = nullptr, int limit = 0);

// Attack success rate (%): fraction of non-target-class samples classified
// as the target after the trigger (and optional defense) is applied.
double eval_asr(const models::ModelState<float>& model, const Dataset& test,
                const attacks::TriggerSpec& trigger,
                const defenses::DefenseSpec* defense = nullptr, int limit = 0);

// Runs `repetitions` independent poison->train->eval cycles with derived
// seeds and fresh model initializations, then aggregates.
MetricsReport run_experiment(const ExperimentConfig& cfg);

// Line-delimited report records plus a summary line; byte-stable given
// identical metrics.
void emit_report(const MetricsReport& report, const std::string& path);
MetricsReport parse_report(const std::string& path);

// Flat CSV in (attack, model, ACC, ASR) layout; reports with a defense
// configured contribute a second "<attack>+<defense>" row.
std::string render_table(std::span<const MetricsReport> reports);

} // namespace vsslab::harness
