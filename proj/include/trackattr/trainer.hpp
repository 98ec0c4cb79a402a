#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trackattr/geo.hpp"
#include "trackattr/model.hpp"
#include "trackattr/pairs.hpp"
#include "trackattr/params.hpp"
#include "trackattr/store.hpp"
#include "trackattr/world.hpp"

namespace trackattr {

struct TrainConfig {
    double lr_global = 0.001;
    double lr_top_multiplier = 10.0;
    double margin = 1.0;
    int batch_size = 32;
    int epochs = 30;
    std::uint64_t seed = 1;
};

void validate_train_config(const TrainConfig& cfg);

struct TrainReport {
    std::vector<double> epoch_mean_loss;
    double final_train_accuracy = -1.0;  // -1 when the stage does not measure one
    std::uint64_t final_checksum = 0;
    double wall_seconds = 0.0;
    std::vector<std::string> warnings;

    std::string to_text() const;
    std::string to_json() const;
};

enum class ContextHead { geo, weather };
const char* to_string(ContextHead head);
ContextHead context_head_from_string(const std::string& s);

enum class InitMode { scratch, pretrained };
const char* to_string(InitMode mode);
InitMode init_mode_from_string(const std::string& s);

// Paper protocol: 0.001 from scratch, 0.0001 when fine-tuning a pre-trained
// model (which then gets the 10x multiplier on the top two layers).
double default_finetune_lr(InitMode mode);

// p <- p - lr_global * multiplier(name) * g, multiplier defaulting to 1.
// Throws NumericError naming the parameter on a non-finite gradient.
void sgd_step(ParamStore& params, const ParamStore& grads, double lr_global,
              const std::map<std::string, double>& multipliers);

// Stage 1: Siamese verification training over mined pairs.
std::pair<ParamStore, TrainReport> pretrain_verification(const SampleStore& store,
                                                         const PairSet& pairs,
                                                         const ModelSpec& spec,
                                                         const TrainConfig& cfg);

// Stage 2: branch-copy the trunk and train one context head with softmax loss
// on discretized geo or weather labels. The source ParamStore is untouched.
std::pair<ParamStore, TrainReport> train_context_head(const ParamStore& verif_params,
                                                      const ModelSpec& spec,
                                                      const SampleStore& store,
                                                      const GeoRegionSet& regions,
                                                      const ContextLabelSpec& label_spec,
                                                      ContextHead head, const TrainConfig& cfg);

// Stage 3: assemble the masked branches plus a K-unit sigmoid head and
// fine-tune on binary attribute labels. In pretrained mode the branch inputs
// are used as-is and the top two layers get lr_top_multiplier; in scratch
// mode every active branch is freshly initialized and the multipliers are
// off. train_indices may be empty to use every sample.
std::pair<ParamStore, TrainReport> finetune_attributes(
    const ParamStore* verif_params, const ParamStore* geo_params,
    const ParamStore* weather_params, const ModelSpec& spec, const SampleStore& store,
    const AttributeTruth& truth, const AblationMask& mask, InitMode init_mode,
    const std::vector<std::size_t>& train_indices, const TrainConfig& cfg);

// Multiplier map for attribute fine-tuning: the attribute output layer plus
// the feature layer of every active branch.
std::map<std::string, double> top_layer_multipliers(const AblationMask& mask, double multiplier);

}  // namespace trackattr
