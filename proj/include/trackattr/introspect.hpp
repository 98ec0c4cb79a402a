#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trackattr/model.hpp"
#include "trackattr/store.hpp"

namespace trackattr {

struct IntrospectConfig {
    std::string layer = "ctx_embed";
    int top_neurons = 4;  // per class
    int top_samples = 4;  // per neuron, ranked over the whole store
    // Default ranking is the class-conditional mean of post-activation values;
    // this switches to the class-conditional max.
    bool rank_by_max = false;
    int batch_size = 64;
};

void validate_introspect_config(const IntrospectConfig& cfg);

struct NeuronReport {
    std::string layer;
    int class_id = 0;
    int rank = 0;    // 0 = strongest neuron for the class
    int neuron = 0;  // dense unit or conv channel (spatial mean)
    double class_score = 0.0;
    std::vector<double> class_mean;            // mean activation per class
    std::vector<std::int64_t> top_sample_ids;  // globally top activating samples
};

struct ActivationMatrix {
    std::size_t n = 0;  // samples, store order
    std::size_t d = 0;  // neurons
    std::vector<double> values;

    const double* row(std::size_t i) const { return values.data() + i * d; }
};

// Per-sample scalar activations of the named layer: dense layers report each
// unit, conv layers report the spatial mean per channel. Rows follow store
// order.
ActivationMatrix layer_neuron_activations(const ParamStore& params, const ModelSpec& spec,
                                          const SampleStore& store, const std::string& layer,
                                          int batch_size);

// For each class: the top_neurons neurons with the highest class-conditional
// score, each with its top_samples highest-activating samples over the whole
// store. Ties break toward the lower neuron index / lower sample_id.
std::vector<NeuronReport> top_neurons_per_class(const ParamStore& params, const ModelSpec& spec,
                                                const SampleStore& store,
                                                const std::vector<int>& class_labels,
                                                int n_classes, const IntrospectConfig& cfg);

std::string neuron_report_json(const std::vector<NeuronReport>& reports);

// Grayscale dump of a sample image (channel mean) for visual inspection.
void save_pgm(const SampleStore& store, std::int64_t sample_id, const std::string& path);

}  // namespace trackattr
