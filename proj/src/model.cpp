#include "trackattr/model.hpp"

#include <algorithm>

#include "trackattr/error.hpp"
#include "trackattr/rng.hpp"

namespace trackattr {

void validate_model_spec(const ModelSpec& spec) {
    if (spec.image_h < 4 || spec.image_w < 4 || spec.image_c < 1)
        throw ConfigError("model: image shape too small: " + std::to_string(spec.image_h) + "x" +
                          std::to_string(spec.image_w) + "x" + std::to_string(spec.image_c));
    if (spec.image_h % 4 != 0 || spec.image_w % 4 != 0)
        throw ConfigError("model: image H and W must be divisible by 4 (two pooling stages)");
    if (spec.kernel < 1 || spec.kernel % 2 == 0)
        throw ConfigError("model: kernel size must be odd and positive");
    if (spec.conv1_filters < 1 || spec.conv2_filters < 1)
        throw ConfigError("model: conv filter counts must be positive");
    if (spec.dense1_units < 1 || spec.dense2_units < 1)
        throw ConfigError("model: dense widths must be positive");
    if (spec.embed_dim < 2) throw ConfigError("model: embed_dim must be >= 2");
    if (spec.n_geo_classes < 2 || spec.n_weather_classes < 2)
        throw ConfigError("model: class counts must be >= 2");
}

std::string spec_echo(const ModelSpec& spec) {
    std::string s;
    s += "h=" + std::to_string(spec.image_h);
    s += " w=" + std::to_string(spec.image_w);
    s += " c=" + std::to_string(spec.image_c);
    s += " conv1=" + std::to_string(spec.conv1_filters);
    s += " conv2=" + std::to_string(spec.conv2_filters);
    s += " k=" + std::to_string(spec.kernel);
    s += " fc1=" + std::to_string(spec.dense1_units);
    s += " fc2=" + std::to_string(spec.dense2_units);
    s += " embed=" + std::to_string(spec.embed_dim);
    s += " geo=" + std::to_string(spec.n_geo_classes);
    s += " weather=" + std::to_string(spec.n_weather_classes);
    return s;
}

int trunk_flat_dim(const ModelSpec& spec) {
    return (spec.image_h / 4) * (spec.image_w / 4) * spec.conv2_filters;
}

AblationMask AblationMask::from_string(const std::string& s) {
    AblationMask m;
    if (s == "id") {
        m.use_verif = true;
    } else if (s == "id+geo") {
        m.use_verif = m.use_geo = true;
    } else if (s == "id+weather") {
        m.use_verif = m.use_weather = true;
    } else if (s == "id+geo+weather") {
        m.use_verif = m.use_geo = m.use_weather = true;
    } else {
        throw ValidationError("unknown feature mask '" + s +
                              "' (expected id, id+geo, id+weather, or id+geo+weather)");
    }
    return m;
}

std::string AblationMask::to_string() const {
    std::string s;
    if (use_verif) s += "id";
    if (use_geo) s += s.empty() ? "geo" : "+geo";
    if (use_weather) s += s.empty() ? "weather" : "+weather";
    return s.empty() ? "none" : s;
}

namespace {

void add_dense(ParamStore& params, const std::string& name, int in, int out, std::uint64_t seed) {
    params.add(name + ".w", init_uniform_fanin({in, out}, in, derive_seed(seed, name + ".w")));
    params.add(name + ".b", Tensor({out}));
}

void add_trunk(ParamStore& params, const ModelSpec& spec, std::uint64_t seed) {
    int k = spec.kernel;
    params.add("conv1.w", init_uniform_fanin({k, k, spec.image_c, spec.conv1_filters},
                                             k * k * spec.image_c, derive_seed(seed, "conv1.w")));
    params.add("conv1.b", Tensor({spec.conv1_filters}));
    params.add("conv2.w",
               init_uniform_fanin({k, k, spec.conv1_filters, spec.conv2_filters},
                                  k * k * spec.conv1_filters, derive_seed(seed, "conv2.w")));
    params.add("conv2.b", Tensor({spec.conv2_filters}));
    add_dense(params, "fc1", trunk_flat_dim(spec), spec.dense1_units, seed);
    add_dense(params, "fc2", spec.dense1_units, spec.dense2_units, seed);
}

}  // namespace

ParamStore init_verification_params(const ModelSpec& spec, std::uint64_t seed) {
    validate_model_spec(spec);
    ParamStore params;
    add_trunk(params, spec, seed);
    add_dense(params, "embed", spec.dense2_units, spec.embed_dim, seed);
    return params;
}

ParamStore init_context_params(const ModelSpec& spec, int n_classes, std::uint64_t seed) {
    validate_model_spec(spec);
    if (n_classes < 2) throw ConfigError("context head needs >= 2 classes");
    ParamStore params;
    add_trunk(params, spec, seed);
    add_dense(params, "ctx_embed", spec.dense1_units + spec.dense2_units, spec.embed_dim, seed);
    add_dense(params, "cls", spec.embed_dim, n_classes, seed);
    return params;
}

ParamStore branch_context_from_verification(const ParamStore& verif, const ModelSpec& spec,
                                            int n_classes, std::uint64_t seed) {
    validate_model_spec(spec);
    if (n_classes < 2) throw ConfigError("context head needs >= 2 classes");
    ParamStore params;
    for (const char* name : {"conv1.w", "conv1.b", "conv2.w", "conv2.b", "fc1.w", "fc1.b",
                             "fc2.w", "fc2.b"})
        params.add(name, verif.tensor(name));
    add_dense(params, "ctx_embed", spec.dense1_units + spec.dense2_units, spec.embed_dim, seed);
    add_dense(params, "cls", spec.embed_dim, n_classes, seed);
    return params;
}

ParamStore init_attribute_head(int feature_dim, int n_attributes, std::uint64_t seed) {
    if (feature_dim < 1) throw ConfigError("attribute head needs a positive feature width");
    if (n_attributes < 1) throw ConfigError("attribute head needs >= 1 attribute");
    ParamStore params;
    add_dense(params, "attr", feature_dim, n_attributes, seed);
    return params;
}

Tape::NodeId BoundParams::id(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end()) throw ValidationError("parameter not bound on tape: " + name);
    return it->second;
}

Tape::NodeId bind_param(Tape& tape, const ParamStore& params, const std::string& name,
                        BoundParams& bound) {
    auto it = bound.ids.find(name);
    if (it != bound.ids.end()) return it->second;
    Tape::NodeId id = tape.leaf(params.tensor(name), name);
    bound.ids.emplace(name, id);
    return id;
}

namespace {

struct TrunkNodes {
    Tape::NodeId fc1 = -1;  // [N,dense1] post-relu
    Tape::NodeId fc2 = -1;  // [N,dense2] post-relu
};

TrunkNodes trunk_forward(Tape& tape, const ModelSpec& spec, const ParamStore& params,
                         const std::string& prefix, Tape::NodeId images, BoundParams& bound) {
    const Tensor& iv = tape.value(images);
    if (iv.ndim() != 4 || iv.dim(1) != spec.image_h || iv.dim(2) != spec.image_w ||
        iv.dim(3) != spec.image_c)
        throw ShapeError("trunk expects images [N," + std::to_string(spec.image_h) + "," +
                         std::to_string(spec.image_w) + "," + std::to_string(spec.image_c) +
                         "], got " + shape_string(iv.shape));
    auto p = [&](const char* name) { return bind_param(tape, params, prefix + name, bound); };
    Tape::NodeId h = tape.conv2d(images, p("conv1.w"), p("conv1.b"));
    h = tape.maxpool2(tape.relu(h));
    h = tape.conv2d(h, p("conv2.w"), p("conv2.b"));
    h = tape.maxpool2(tape.relu(h));
    h = tape.flatten(h);
    TrunkNodes nodes;
    nodes.fc1 = tape.relu(tape.dense(h, p("fc1.w"), p("fc1.b")));
    nodes.fc2 = tape.relu(tape.dense(nodes.fc1, p("fc2.w"), p("fc2.b")));
    return nodes;
}

}  // namespace

Tape::NodeId verification_forward(Tape& tape, const ModelSpec& spec, const ParamStore& params,
                                  const std::string& prefix, Tape::NodeId images,
                                  BoundParams& bound) {
    TrunkNodes trunk = trunk_forward(tape, spec, params, prefix, images, bound);
    return tape.dense(trunk.fc2, bind_param(tape, params, prefix + "embed.w", bound),
                      bind_param(tape, params, prefix + "embed.b", bound));
}

Tape::NodeId context_embed_forward(Tape& tape, const ModelSpec& spec, const ParamStore& params,
                                   const std::string& prefix, Tape::NodeId images,
                                   BoundParams& bound) {
    TrunkNodes trunk = trunk_forward(tape, spec, params, prefix, images, bound);
    Tape::NodeId tap = tape.concat({trunk.fc1, trunk.fc2});
    return tape.dense(tap, bind_param(tape, params, prefix + "ctx_embed.w", bound),
                      bind_param(tape, params, prefix + "ctx_embed.b", bound));
}

ContextNodes context_forward(Tape& tape, const ModelSpec& spec, const ParamStore& params,
                             const std::string& prefix, int n_classes, Tape::NodeId images,
                             BoundParams& bound) {
    ContextNodes nodes;
    nodes.embed = context_embed_forward(tape, spec, params, prefix, images, bound);
    Tape::NodeId cls_in = tape.relu(nodes.embed);
    nodes.logits = tape.dense(cls_in, bind_param(tape, params, prefix + "cls.w", bound),
                              bind_param(tape, params, prefix + "cls.b", bound));
    if (tape.value(nodes.logits).dim(1) != n_classes)
        throw ShapeError("context head produced " +
                         std::to_string(tape.value(nodes.logits).dim(1)) + " logits, expected " +
                         std::to_string(n_classes));
    return nodes;
}

Tape::NodeId contrastive_loss(Tape& tape, Tape::NodeId e_i, Tape::NodeId e_j,
                              const std::vector<int>& labels, double margin) {
    if (!(margin > 0)) throw ValidationError("contrastive margin must be > 0");
    const Tensor& ev = tape.value(e_i);
    if (ev.ndim() != 2 || static_cast<std::size_t>(ev.dim(0)) != labels.size())
        throw ShapeError("contrastive_loss: embeddings [N,D] must match " +
                         std::to_string(labels.size()) + " labels, got " + shape_string(ev.shape));
    int n = ev.dim(0);
    Tensor pos_mask({n}), neg_mask({n});
    for (int i = 0; i < n; ++i) {
        if (labels[static_cast<std::size_t>(i)] == +1) {
            pos_mask[static_cast<std::size_t>(i)] = 1.0;
        } else if (labels[static_cast<std::size_t>(i)] == -1) {
            neg_mask[static_cast<std::size_t>(i)] = 1.0;
        } else {
            throw ValidationError("pair label must be +1 or -1, got " +
                                  std::to_string(labels[static_cast<std::size_t>(i)]));
        }
    }
    Tape::NodeId d = tape.l2_distance(e_i, e_j);
    Tape::NodeId pulled = tape.mul(tape.constant(std::move(pos_mask), "positive_mask"), d);
    Tape::NodeId hinge = tape.relu(tape.add_scalar(tape.scale(d, -1.0), margin));
    Tape::NodeId pushed = tape.mul(tape.constant(std::move(neg_mask), "negative_mask"), hinge);
    return tape.mean(tape.add(pulled, pushed));
}

Tape::NodeId representation_forward(Tape& tape, const ModelSpec& spec, const ParamStore& merged,
                                    const AblationMask& mask, Tape::NodeId images,
                                    BoundParams& bound) {
    if (mask.n_active() == 0) throw ValidationError("feature mask selects no branches");
    std::vector<Tape::NodeId> features;
    if (mask.use_verif)
        features.push_back(verification_forward(tape, spec, merged, "verif.", images, bound));
    if (mask.use_geo)
        features.push_back(context_embed_forward(tape, spec, merged, "geo.", images, bound));
    if (mask.use_weather)
        features.push_back(context_embed_forward(tape, spec, merged, "weather.", images, bound));
    return features.size() == 1 ? features[0] : tape.concat(features);
}

Tape::NodeId attribute_forward(Tape& tape, const ModelSpec& spec, const ParamStore& merged,
                               const AblationMask& mask, Tape::NodeId images, BoundParams& bound) {
    Tape::NodeId rep = representation_forward(tape, spec, merged, mask, images, bound);
    return tape.dense(rep, bind_param(tape, merged, "attr.w", bound),
                      bind_param(tape, merged, "attr.b", bound));
}

std::vector<std::pair<std::string, Tensor>> branch_activations(const ModelSpec& spec,
                                                               const ParamStore& params,
                                                               const Tensor& images) {
    bool is_verification = params.has("embed.w");
    if (!is_verification && !params.has("ctx_embed.w"))
        throw ValidationError("params hold neither a verification nor a context branch top");
    Tape tape;
    BoundParams bound;
    auto p = [&](const char* name) { return bind_param(tape, params, name, bound); };
    Tape::NodeId input = tape.constant(images, "images");
    const Tensor& iv = tape.value(input);
    if (iv.ndim() != 4 || iv.dim(1) != spec.image_h || iv.dim(2) != spec.image_w ||
        iv.dim(3) != spec.image_c)
        throw ShapeError("branch_activations expects images [N,H,W,C] matching the model spec, "
                         "got " +
                         shape_string(iv.shape));

    std::vector<std::pair<std::string, Tensor>> out;
    Tape::NodeId conv1 = tape.relu(tape.conv2d(input, p("conv1.w"), p("conv1.b")));
    out.emplace_back("conv1", tape.value(conv1));
    Tape::NodeId pool1 = tape.maxpool2(conv1);
    Tape::NodeId conv2 = tape.relu(tape.conv2d(pool1, p("conv2.w"), p("conv2.b")));
    out.emplace_back("conv2", tape.value(conv2));
    Tape::NodeId flat = tape.flatten(tape.maxpool2(conv2));
    Tape::NodeId fc1 = tape.relu(tape.dense(flat, p("fc1.w"), p("fc1.b")));
    out.emplace_back("fc1", tape.value(fc1));
    Tape::NodeId fc2 = tape.relu(tape.dense(fc1, p("fc2.w"), p("fc2.b")));
    out.emplace_back("fc2", tape.value(fc2));
    if (is_verification) {
        Tape::NodeId embed = tape.dense(fc2, p("embed.w"), p("embed.b"));
        out.emplace_back("embed", tape.value(embed));
    } else {
        Tape::NodeId tap = tape.concat({fc1, fc2});
        Tape::NodeId embed = tape.dense(tap, p("ctx_embed.w"), p("ctx_embed.b"));
        out.emplace_back("ctx_embed", tape.value(embed));
    }
    return out;
}

Tensor batch_images(const SampleStore& store, const std::vector<std::size_t>& indices) {
    int n = static_cast<int>(indices.size());
    if (n == 0) throw ValidationError("batch_images: empty index list");
    Tensor batch({n, store.height(), store.width(), store.channels()});
    std::size_t per = batch.numel() / static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i) {
        const FaceSample& s = store.sample(indices[static_cast<std::size_t>(i)]);
        std::copy(s.image.begin(), s.image.end(),
                  batch.data.begin() + static_cast<std::ptrdiff_t>(per * i));
    }
    return batch;
}

}  // namespace trackattr
