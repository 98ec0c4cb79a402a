#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trackattr/params.hpp"
#include "trackattr/store.hpp"
#include "trackattr/tape.hpp"

namespace trackattr {

// Shared trunk: conv(+relu+pool) x2, then two dense+relu stages. Each branch
// tops the trunk with its own linear feature layer of width embed_dim.
struct ModelSpec {
    int image_h = 16;
    int image_w = 16;
    int image_c = 1;
    int conv1_filters = 8;
    int conv2_filters = 16;
    int kernel = 3;
    int dense1_units = 64;
    int dense2_units = 64;
    int embed_dim = 32;
    int n_geo_classes = 4;
    int n_weather_classes = 2;
};

void validate_model_spec(const ModelSpec& spec);

// One-line text form recorded in checkpoints and compared on load.
std::string spec_echo(const ModelSpec& spec);

// Flattened width after the two conv+pool stages.
int trunk_flat_dim(const ModelSpec& spec);

// Branch subset feeding the concatenated representation, fixed order
// (verification, location, weather).
struct AblationMask {
    bool use_verif = false;
    bool use_geo = false;
    bool use_weather = false;

    static AblationMask from_string(const std::string& s);
    std::string to_string() const;
    int n_active() const { return (use_verif ? 1 : 0) + (use_geo ? 1 : 0) + (use_weather ? 1 : 0); }
    int feature_dim(const ModelSpec& spec) const { return n_active() * spec.embed_dim; }
};

// Parameter tensors under `prefix`: trunk (conv1, conv2, fc1, fc2) plus the
// branch top. Verification tops with `embed`; context branches top with
// `ctx_embed` over concat(fc1 out, fc2 out) and a `cls` softmax layer.
ParamStore init_verification_params(const ModelSpec& spec, std::uint64_t seed);
ParamStore init_context_params(const ModelSpec& spec, int n_classes, std::uint64_t seed);

// Copies the trunk of a trained verification model and attaches a freshly
// initialized context top, leaving the source untouched.
ParamStore branch_context_from_verification(const ParamStore& verif, const ModelSpec& spec,
                                            int n_classes, std::uint64_t seed);

// K sigmoid output units over a feature vector of width feature_dim.
ParamStore init_attribute_head(int feature_dim, int n_attributes, std::uint64_t seed);

// Tape leaves created for parameters during a forward build, keyed by name,
// so training code can look up gradients after backward().
struct BoundParams {
    std::map<std::string, Tape::NodeId> ids;

    Tape::NodeId id(const std::string& name) const;
    bool bound(const std::string& name) const { return ids.count(name) > 0; }
};

Tape::NodeId bind_param(Tape& tape, const ParamStore& params, const std::string& name,
                        BoundParams& bound);

// images: constant node [N,H,W,C]. Returns the verification embedding [N,D_e].
Tape::NodeId verification_forward(Tape& tape, const ModelSpec& spec, const ParamStore& params,
                                  const std::string& prefix, Tape::NodeId images,
                                  BoundParams& bound);

// Feature layer of a context branch: dense over concat(fc1 out, fc2 out).
Tape::NodeId context_embed_forward(Tape& tape, const ModelSpec& spec, const ParamStore& params,
                                   const std::string& prefix, Tape::NodeId images,
                                   BoundParams& bound);

struct ContextNodes {
    Tape::NodeId embed = -1;   // [N,D_e] feature layer output
    Tape::NodeId logits = -1;  // [N,n_classes]
};
ContextNodes context_forward(Tape& tape, const ModelSpec& spec, const ParamStore& params,
                             const std::string& prefix, int n_classes, Tape::NodeId images,
                             BoundParams& bound);

// Mean over the batch of: d for label +1, max(margin - d, 0) for label -1,
// with d the plain l2 embedding distance.
Tape::NodeId contrastive_loss(Tape& tape, Tape::NodeId e_i, Tape::NodeId e_j,
                              const std::vector<int>& labels, double margin);

// Concatenated representation of the active branches (params under prefixes
// "verif.", "geo.", "weather."), order (verification, location, weather).
Tape::NodeId representation_forward(Tape& tape, const ModelSpec& spec, const ParamStore& merged,
                                    const AblationMask& mask, Tape::NodeId images,
                                    BoundParams& bound);

// Representation plus K attribute logits via "attr.w"/"attr.b".
Tape::NodeId attribute_forward(Tape& tape, const ModelSpec& spec, const ParamStore& merged,
                               const AblationMask& mask, Tape::NodeId images, BoundParams& bound);

// [n,H,W,C] batch of the store images at the given sample indices.
Tensor batch_images(const SampleStore& store, const std::vector<std::size_t>& indices);

// Post-activation tensors per layer for one branch model (unprefixed params),
// ordered bottom to top: conv1, conv2 (post-relu, pre-pool), fc1, fc2
// (post-relu), then the branch top (embed or ctx_embed, linear).
std::vector<std::pair<std::string, Tensor>> branch_activations(const ModelSpec& spec,
                                                               const ParamStore& params,
                                                               const Tensor& images);

}  // namespace trackattr
