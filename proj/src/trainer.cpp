#include "trackattr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "trackattr/error.hpp"
#include "trackattr/rng.hpp"

namespace trackattr {

void validate_train_config(const TrainConfig& cfg) {
    if (!(cfg.lr_global > 0)) throw ConfigError("lr_global must be > 0");
    if (!(cfg.lr_top_multiplier > 0)) throw ConfigError("lr_top_multiplier must be > 0");
    if (!(cfg.margin > 0)) throw ConfigError("margin must be > 0");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
}

std::string TrainReport::to_text() const {
    std::ostringstream out;
    out.precision(6);
    out << "epochs: " << epoch_mean_loss.size() << "\n";
    if (!epoch_mean_loss.empty())
        out << "mean loss: first " << epoch_mean_loss.front() << ", last "
            << epoch_mean_loss.back() << "\n";
    if (final_train_accuracy >= 0) out << "train accuracy: " << final_train_accuracy << "\n";
    out << "params checksum: " << final_checksum << "\n";
    out << "wall seconds: " << wall_seconds << "\n";
    for (const std::string& w : warnings) out << "warning: " << w << "\n";
    return out.str();
}

// Used for artifacts, so wall time stays out: repeated runs with one config
// must serialize byte-identically.
std::string TrainReport::to_json() const {
    nlohmann::ordered_json j;
    j["epoch_mean_loss"] = epoch_mean_loss;
    if (final_train_accuracy >= 0) j["final_train_accuracy"] = final_train_accuracy;
    j["final_checksum"] = final_checksum;
    j["warnings"] = warnings;
    return j.dump(2);
}

const char* to_string(ContextHead head) {
    return head == ContextHead::geo ? "geo" : "weather";
}

ContextHead context_head_from_string(const std::string& s) {
    if (s == "geo") return ContextHead::geo;
    if (s == "weather") return ContextHead::weather;
    throw ValidationError("unknown context head '" + s + "' (expected geo or weather)");
}

const char* to_string(InitMode mode) {
    return mode == InitMode::scratch ? "scratch" : "pretrained";
}

InitMode init_mode_from_string(const std::string& s) {
    if (s == "scratch") return InitMode::scratch;
    if (s == "pretrained") return InitMode::pretrained;
    throw ValidationError("unknown init mode '" + s + "' (expected scratch or pretrained)");
}

double default_finetune_lr(InitMode mode) { return mode == InitMode::scratch ? 0.001 : 0.0001; }

void sgd_step(ParamStore& params, const ParamStore& grads, double lr_global,
              const std::map<std::string, double>& multipliers) {
    for (const std::string& name : params.names()) {
        const Tensor& g = grads.tensor(name);
        Tensor& p = params.tensor(name);
        if (!p.same_shape(g))
            throw ShapeError("gradient shape " + shape_string(g.shape) + " does not match " +
                             name + " " + shape_string(p.shape));
        for (double v : g.data)
            if (!std::isfinite(v)) throw NumericError("non-finite gradient for " + name);
        auto it = multipliers.find(name);
        double lr = lr_global * (it == multipliers.end() ? 1.0 : it->second);
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] -= lr * g[i];
    }
}

namespace {

ParamStore collect_grads(const Tape& tape, const BoundParams& bound, const ParamStore& params) {
    ParamStore grads;
    for (const std::string& name : params.names()) grads.add(name, tape.grad(bound.id(name)));
    return grads;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(batch_size)) {
        std::size_t end = std::min(n, at + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

std::vector<int> context_labels(const SampleStore& store, const GeoRegionSet& regions,
                                const ContextLabelSpec& label_spec, ContextHead head) {
    return head == ContextHead::geo ? store.geo_labels(regions) : store.weather_labels(label_spec);
}

double context_train_accuracy(const ParamStore& params, const ModelSpec& spec,
                              const SampleStore& store, const std::vector<int>& labels,
                              int n_classes, int batch_size) {
    std::size_t n = store.size();
    std::size_t correct = 0;
    for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(batch_size)) {
        std::size_t end = std::min(n, at + static_cast<std::size_t>(batch_size));
        std::vector<std::size_t> idx(end - at);
        std::iota(idx.begin(), idx.end(), at);
        Tape tape;
        BoundParams bound;
        Tape::NodeId images = tape.constant(batch_images(store, idx), "images");
        ContextNodes nodes = context_forward(tape, spec, params, "", n_classes, images, bound);
        const Tensor& logits = tape.value(nodes.logits);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            int best = 0;
            for (int c = 1; c < n_classes; ++c)
                if (logits[r * static_cast<std::size_t>(n_classes) + static_cast<std::size_t>(c)] >
                    logits[r * static_cast<std::size_t>(n_classes) + static_cast<std::size_t>(best)])
                    best = c;
            if (best == labels[idx[r]]) ++correct;
        }
    }
    return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
}

Tensor attribute_targets(const std::vector<std::vector<int>>& labels,
                         const std::vector<std::size_t>& idx, int k) {
    Tensor t({static_cast<int>(idx.size()), k});
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (int a = 0; a < k; ++a)
            t[r * static_cast<std::size_t>(k) + static_cast<std::size_t>(a)] =
                static_cast<double>(labels[idx[r]][static_cast<std::size_t>(a)]);
    return t;
}

double attribute_train_accuracy(const ParamStore& merged, const ModelSpec& spec,
                                const SampleStore& store,
                                const std::vector<std::vector<int>>& labels,
                                const AblationMask& mask,
                                const std::vector<std::size_t>& indices, int k, int batch_size) {
    std::size_t total = 0, correct = 0;
    for (std::size_t at = 0; at < indices.size(); at += static_cast<std::size_t>(batch_size)) {
        std::size_t end = std::min(indices.size(), at + static_cast<std::size_t>(batch_size));
        std::vector<std::size_t> idx(indices.begin() + static_cast<std::ptrdiff_t>(at),
                                     indices.begin() + static_cast<std::ptrdiff_t>(end));
        Tape tape;
        BoundParams bound;
        Tape::NodeId images = tape.constant(batch_images(store, idx), "images");
        Tape::NodeId logits = attribute_forward(tape, spec, merged, mask, images, bound);
        const Tensor& z = tape.value(logits);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (int a = 0; a < k; ++a) {
                int pred = z[r * static_cast<std::size_t>(k) + static_cast<std::size_t>(a)] >= 0
                               ? 1
                               : 0;
                correct += pred == labels[idx[r]][static_cast<std::size_t>(a)] ? 1 : 0;
                ++total;
            }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

// Context branch minus its softmax classifier, under a prefix.
void add_feature_branch(ParamStore& merged, const ParamStore& branch, const std::string& prefix) {
    for (const std::string& name : branch.names())
        if (name.rfind("cls.", 0) != 0) merged.add(prefix + name, branch.tensor(name));
}

}  // namespace

std::pair<ParamStore, TrainReport> pretrain_verification(const SampleStore& store,
                                                         const PairSet& pairs,
                                                         const ModelSpec& spec,
                                                         const TrainConfig& cfg) {
    validate_train_config(cfg);
    validate_model_spec(spec);
    if (pairs.size() == 0) throw ValidationError("cannot pretrain on an empty pair set");

    std::vector<std::pair<std::size_t, std::size_t>> pair_idx;
    std::vector<int> pair_labels;
    pair_idx.reserve(pairs.size());
    for (const Pair& p : pairs.pairs) {
        if (!store.contains(p.a) || !store.contains(p.b))
            throw ValidationError("pair (" + std::to_string(p.a) + "," + std::to_string(p.b) +
                                  ") references samples missing from the store");
        pair_idx.emplace_back(store.index_of(p.a), store.index_of(p.b));
        pair_labels.push_back(p.label);
    }

    Stopwatch watch;
    ParamStore params = init_verification_params(spec, derive_seed(cfg.seed, "verif-init"));
    TrainReport report;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "verif-epoch", static_cast<std::uint64_t>(epoch)));
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (const auto& batch : make_batches(pair_idx.size(), cfg.batch_size, rng)) {
            std::vector<std::size_t> left, right;
            std::vector<int> labels;
            for (std::size_t b : batch) {
                left.push_back(pair_idx[b].first);
                right.push_back(pair_idx[b].second);
                labels.push_back(pair_labels[b]);
            }
            Tape tape;
            BoundParams bound;
            Tape::NodeId img_a = tape.constant(batch_images(store, left), "images_a");
            Tape::NodeId img_b = tape.constant(batch_images(store, right), "images_b");
            Tape::NodeId e_a = verification_forward(tape, spec, params, "", img_a, bound);
            Tape::NodeId e_b = verification_forward(tape, spec, params, "", img_b, bound);
            Tape::NodeId loss = contrastive_loss(tape, e_a, e_b, labels, cfg.margin);
            tape.backward(loss);
            sgd_step(params, collect_grads(tape, bound, params), cfg.lr_global, {});
            loss_sum += tape.value(loss)[0] * static_cast<double>(batch.size());
            seen += batch.size();
        }
        report.epoch_mean_loss.push_back(loss_sum / static_cast<double>(seen));
    }
    report.final_checksum = params.checksum();
    report.wall_seconds = watch.seconds();
    return {std::move(params), std::move(report)};
}

std::pair<ParamStore, TrainReport> train_context_head(const ParamStore& verif_params,
                                                      const ModelSpec& spec,
                                                      const SampleStore& store,
                                                      const GeoRegionSet& regions,
                                                      const ContextLabelSpec& label_spec,
                                                      ContextHead head, const TrainConfig& cfg) {
    validate_train_config(cfg);
    validate_model_spec(spec);
    if (store.size() == 0) throw ValidationError("cannot train a context head on an empty store");
    int n_classes =
        head == ContextHead::geo ? spec.n_geo_classes : spec.n_weather_classes;
    std::vector<int> labels = context_labels(store, regions, label_spec, head);

    TrainReport report;
    {
        std::vector<int> seen_class(static_cast<std::size_t>(n_classes), 0);
        for (int l : labels) seen_class[static_cast<std::size_t>(l)] = 1;
        int distinct = 0;
        for (int s : seen_class) distinct += s;
        if (distinct < 2)
            report.warnings.push_back(std::string("all ") + to_string(head) +
                                      " labels fall in a single class; training proceeds");
    }

    Stopwatch watch;
    ParamStore params = branch_context_from_verification(
        verif_params, spec, n_classes,
        derive_seed(cfg.seed, std::string(to_string(head)) + "-ctx-init"));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, std::string(to_string(head)) + "-ctx-epoch",
                            static_cast<std::uint64_t>(epoch)));
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (const auto& batch : make_batches(store.size(), cfg.batch_size, rng)) {
            std::vector<int> batch_classes;
            for (std::size_t b : batch) batch_classes.push_back(labels[b]);
            Tape tape;
            BoundParams bound;
            Tape::NodeId images = tape.constant(batch_images(store, batch), "images");
            ContextNodes nodes = context_forward(tape, spec, params, "", n_classes, images, bound);
            Tape::NodeId loss =
                tape.mean(tape.softmax_cross_entropy(nodes.logits, batch_classes));
            tape.backward(loss);
            sgd_step(params, collect_grads(tape, bound, params), cfg.lr_global, {});
            loss_sum += tape.value(loss)[0] * static_cast<double>(batch.size());
            seen += batch.size();
        }
        report.epoch_mean_loss.push_back(loss_sum / static_cast<double>(seen));
    }
    report.final_train_accuracy =
        context_train_accuracy(params, spec, store, labels, n_classes, cfg.batch_size);
    report.final_checksum = params.checksum();
    report.wall_seconds = watch.seconds();
    return {std::move(params), std::move(report)};
}

std::map<std::string, double> top_layer_multipliers(const AblationMask& mask, double multiplier) {
    std::map<std::string, double> m;
    m["attr.w"] = multiplier;
    m["attr.b"] = multiplier;
    if (mask.use_verif) {
        m["verif.embed.w"] = multiplier;
        m["verif.embed.b"] = multiplier;
    }
    if (mask.use_geo) {
        m["geo.ctx_embed.w"] = multiplier;
        m["geo.ctx_embed.b"] = multiplier;
    }
    if (mask.use_weather) {
        m["weather.ctx_embed.w"] = multiplier;
        m["weather.ctx_embed.b"] = multiplier;
    }
    return m;
}

std::pair<ParamStore, TrainReport> finetune_attributes(
    const ParamStore* verif_params, const ParamStore* geo_params,
    const ParamStore* weather_params, const ModelSpec& spec, const SampleStore& store,
    const AttributeTruth& truth, const AblationMask& mask, InitMode init_mode,
    const std::vector<std::size_t>& train_indices, const TrainConfig& cfg) {
    validate_train_config(cfg);
    validate_model_spec(spec);
    if (mask.n_active() == 0) throw ValidationError("feature mask selects no branches");
    if (store.size() == 0)
        throw ValidationError("cannot fine-tune attributes on an empty store");
    int k = truth.n_attributes();
    if (k < 1) throw ValidationError("attribute truth is empty");

    Stopwatch watch;
    ParamStore merged;
    if (mask.use_verif) {
        if (init_mode == InitMode::scratch) {
            merged.add_all(init_verification_params(spec, derive_seed(cfg.seed, "scratch-verif")),
                           "verif.");
        } else {
            if (!verif_params)
                throw ValidationError("pretrained mode needs verification parameters");
            merged.add_all(*verif_params, "verif.");
        }
    }
    if (mask.use_geo) {
        if (init_mode == InitMode::scratch) {
            add_feature_branch(
                merged,
                init_context_params(spec, spec.n_geo_classes, derive_seed(cfg.seed, "scratch-geo")),
                "geo.");
        } else {
            if (!geo_params) throw ValidationError("pretrained mode needs geo parameters");
            add_feature_branch(merged, *geo_params, "geo.");
        }
    }
    if (mask.use_weather) {
        if (init_mode == InitMode::scratch) {
            add_feature_branch(merged,
                               init_context_params(spec, spec.n_weather_classes,
                                                   derive_seed(cfg.seed, "scratch-weather")),
                               "weather.");
        } else {
            if (!weather_params) throw ValidationError("pretrained mode needs weather parameters");
            add_feature_branch(merged, *weather_params, "weather.");
        }
    }
    merged.add_all(init_attribute_head(mask.feature_dim(spec), k, derive_seed(cfg.seed, "attr-init")),
                   "");

    std::vector<std::vector<int>> labels = truth.aligned_labels(store);
    std::vector<std::size_t> indices = train_indices;
    if (indices.empty()) {
        indices.resize(store.size());
        std::iota(indices.begin(), indices.end(), std::size_t{0});
    }
    for (std::size_t i : indices)
        if (i >= store.size())
            throw ValidationError("train index " + std::to_string(i) + " out of range");

    std::map<std::string, double> multipliers =
        init_mode == InitMode::pretrained ? top_layer_multipliers(mask, cfg.lr_top_multiplier)
                                          : std::map<std::string, double>{};

    TrainReport report;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "attr-epoch", static_cast<std::uint64_t>(epoch)));
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (const auto& batch : make_batches(indices.size(), cfg.batch_size, rng)) {
            std::vector<std::size_t> idx;
            for (std::size_t b : batch) idx.push_back(indices[b]);
            Tape tape;
            BoundParams bound;
            Tape::NodeId images = tape.constant(batch_images(store, idx), "images");
            Tape::NodeId logits = attribute_forward(tape, spec, merged, mask, images, bound);
            // Per-sample loss sums over the K labels (mean over the batch
            // only), so head gradients do not shrink as attributes are added.
            Tape::NodeId loss = tape.scale(
                tape.mean(tape.sigmoid_bce(logits, attribute_targets(labels, idx, k))),
                static_cast<double>(k));
            tape.backward(loss);
            sgd_step(merged, collect_grads(tape, bound, merged), cfg.lr_global, multipliers);
            loss_sum += tape.value(loss)[0] * static_cast<double>(batch.size());
            seen += batch.size();
        }
        report.epoch_mean_loss.push_back(loss_sum / static_cast<double>(seen));
    }
    report.final_train_accuracy =
        attribute_train_accuracy(merged, spec, store, labels, mask, indices, k, cfg.batch_size);
    report.final_checksum = merged.checksum();
    report.wall_seconds = watch.seconds();
    return {std::move(merged), std::move(report)};
}

}  // namespace trackattr
