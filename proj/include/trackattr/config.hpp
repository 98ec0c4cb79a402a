#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trackattr/evaluator.hpp"
#include "trackattr/introspect.hpp"
#include "trackattr/model.hpp"
#include "trackattr/pairs.hpp"
#include "trackattr/trainer.hpp"
#include "trackattr/world.hpp"

namespace trackattr {

// Everything a run needs, resolved from an INI-style sections file. Sections:
// [world] [mining] [model] [train.pretrain] [train.context] [train.finetune]
// [eval] [ablate] [introspect] [run]. Unknown sections or keys are rejected.
struct RunConfig {
    WorldConfig world;
    MiningConfig mining;
    ModelSpec model;
    TrainConfig pretrain{.lr_global = 0.01, .margin = 2.0, .epochs = 40};
    TrainConfig context{.lr_global = 0.01, .epochs = 50};
    TrainConfig finetune{.lr_global = 0.01, .epochs = 100};
    SvmConfig svm;
    double labeled_fraction = 1.0;
    double train_fraction = 0.8;
    std::vector<std::uint64_t> ablate_seeds = {1, 2, 3};
    std::vector<std::string> ablate_arms = ablation_arm_names();
    IntrospectConfig introspect;
    std::string introspect_model = "geo";  // geo | weather | verif
    bool introspect_dump_images = false;
    std::uint64_t seed = 1;
    std::string out_dir = "runs";

    AblationConfig ablation() const;
};

RunConfig default_run_config();

// Strict parse: full-line comments with # or ;, [section] headers,
// key = value entries. Duplicate or unknown keys are errors.
RunConfig load_run_config(const std::string& path);

// Complete INI text of the resolved config; loading it back reproduces the
// config exactly, and every command writes it beside its outputs.
std::string resolved_text(const RunConfig& cfg);

// FNV-1a of resolved_text, used to content-address ablation outputs.
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace trackattr
