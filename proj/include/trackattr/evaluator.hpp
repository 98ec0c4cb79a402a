#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trackattr/model.hpp"
#include "trackattr/pairs.hpp"
#include "trackattr/trainer.hpp"
#include "trackattr/world.hpp"

namespace trackattr {

// Row-per-sample feature matrix in store order.
struct FeatureMatrix {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> values;

    const double* row(std::size_t i) const { return values.data() + i * d; }
};

struct SvmConfig {
    double lambda = 1e-3;
    double lr = 0.1;
    int epochs = 50;
    int batch_size = 32;
    std::uint64_t seed = 1;
};

void validate_svm_config(const SvmConfig& cfg);

// Binary linear classifier with internal feature standardization. Decision
// rule: predict class 1 when w.x_standardized + b >= 0 (ties at the margin go
// to class 1).
struct LinearClassifier {
    std::vector<double> w;
    double b = 0.0;
    std::vector<double> mean;
    std::vector<double> scale;

    int predict(const double* x) const;
    double decision(const double* x) const;
};

// Frozen masked representation (the concatenated branch features) for the
// given sample indices.
FeatureMatrix extract_features(const ParamStore& merged, const ModelSpec& spec,
                               const AblationMask& mask, const SampleStore& store,
                               const std::vector<std::size_t>& indices, int batch_size);

// Hinge loss + lambda*||w||^2 by seeded minibatch subgradient descent.
// bits[r] in {0,1} labels feature row r; rows selects the training subset.
// A single-class training set yields a constant predictor and a warning.
LinearClassifier fit_linear(const FeatureMatrix& features, const std::vector<int>& bits,
                            const std::vector<std::size_t>& rows, const SvmConfig& cfg,
                            std::vector<std::string>* warnings);

struct AttributeAccuracy {
    std::vector<double> per_attribute;  // percent, 0..100
    double average = 0.0;
};

// SVM path: per-attribute classifiers applied to feature rows.
AttributeAccuracy evaluate(const std::vector<LinearClassifier>& classifiers,
                           const FeatureMatrix& features,
                           const std::vector<std::vector<int>>& labels,
                           const std::vector<std::size_t>& rows);

// Network path: the fine-tuned attribute model's own sigmoid outputs.
AttributeAccuracy attribute_net_accuracy(const ParamStore& merged, const ModelSpec& spec,
                                         const AblationMask& mask, const SampleStore& store,
                                         const std::vector<std::vector<int>>& labels,
                                         const std::vector<std::size_t>& indices, int batch_size);

// Seeded shuffle split; both halves returned sorted ascending.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            double fraction,
                                                                            std::uint64_t seed);

// Same split over an explicit index pool instead of 0..n-1.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    const std::vector<std::size_t>& pool, double fraction, std::uint64_t seed);

// Seeded subset of 0..n-1 holding the samples whose attribute annotations
// exist; fraction >= 1 labels everything.
std::vector<std::size_t> labeled_pool(std::size_t n, double fraction, std::uint64_t seed);

inline const std::vector<std::string>& ablation_arm_names() {
    static const std::vector<std::string> names = {"scratch", "id", "id+geo", "id+weather",
                                                   "id+geo+weather"};
    return names;
}

struct AblationConfig {
    WorldConfig world;
    MiningConfig mining;
    ModelSpec model;
    TrainConfig pretrain;
    TrainConfig context;
    TrainConfig finetune;
    SvmConfig svm;
    // Attribute annotations cover only this seeded fraction of the corpus.
    // Pair mining and context training consume the whole store: track pairs
    // and geo/weather labels come free with the footage, manual attribute
    // labels do not.
    double labeled_fraction = 1.0;
    double train_fraction = 0.8;  // fine-tune split of the labeled pool; the rest is the test set
    std::vector<std::string> arms = ablation_arm_names();
};

struct ArmResult {
    std::string arm;
    bool failed = false;
    std::string error;
    AttributeAccuracy net;
    AttributeAccuracy svm;
    double finetune_seconds = 0.0;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::vector<ArmResult> arms;
};

struct AblationResult {
    int n_attributes = 0;
    std::vector<std::string> arms;
    std::vector<SeedResult> seeds;

    bool any_failed() const;
    // Mean over seeds of the named arm's accuracies; empty if the arm failed
    // anywhere. path: "net" or "svm".
    std::vector<double> arm_mean(const std::string& arm, const std::string& path) const;
    std::vector<double> arm_sd(const std::string& arm, const std::string& path) const;

    // Rows = arms, columns = attributes + Average, cells mean+-sd over seeds.
    std::string table_text(const std::string& path) const;
    // Average-accuracy improvement of each context arm over the id arm.
    std::string improvements_text(const std::string& path) const;
    // Long format: path,arm,seed,attribute,accuracy
    std::string csv() const;
};

// Full pipeline per seed and arm: world, pairs, pretrain, context heads,
// fine-tune, both evaluation paths. Needs >= 3 seeds; a failing arm is
// flagged in the result rather than aborting the sweep.
AblationResult run_ablation(const std::vector<std::uint64_t>& world_seeds,
                            const AblationConfig& cfg);

}  // namespace trackattr
