#include "trackattr/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "trackattr/error.hpp"
#include "trackattr/rng.hpp"

namespace trackattr {

void validate_svm_config(const SvmConfig& cfg) {
    if (!(cfg.lambda >= 0)) throw ConfigError("svm lambda must be >= 0");
    if (!(cfg.lr > 0)) throw ConfigError("svm lr must be > 0");
    if (cfg.epochs < 1) throw ConfigError("svm epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("svm batch_size must be >= 1");
}

double LinearClassifier::decision(const double* x) const {
    double acc = b;
    for (std::size_t j = 0; j < w.size(); ++j) acc += w[j] * (x[j] - mean[j]) / scale[j];
    return acc;
}

int LinearClassifier::predict(const double* x) const { return decision(x) >= 0 ? 1 : 0; }

FeatureMatrix extract_features(const ParamStore& merged, const ModelSpec& spec,
                               const AblationMask& mask, const SampleStore& store,
                               const std::vector<std::size_t>& indices, int batch_size) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    FeatureMatrix out;
    out.n = indices.size();
    out.d = static_cast<std::size_t>(mask.feature_dim(spec));
    out.values.resize(out.n * out.d);
    for (std::size_t at = 0; at < indices.size(); at += static_cast<std::size_t>(batch_size)) {
        std::size_t end = std::min(indices.size(), at + static_cast<std::size_t>(batch_size));
        std::vector<std::size_t> idx(indices.begin() + static_cast<std::ptrdiff_t>(at),
                                     indices.begin() + static_cast<std::ptrdiff_t>(end));
        Tape tape;
        BoundParams bound;
        Tape::NodeId images = tape.constant(batch_images(store, idx), "images");
        Tape::NodeId rep = representation_forward(tape, spec, merged, mask, images, bound);
        const Tensor& v = tape.value(rep);
        std::copy(v.data.begin(), v.data.end(),
                  out.values.begin() + static_cast<std::ptrdiff_t>(at * out.d));
    }
    return out;
}

LinearClassifier fit_linear(const FeatureMatrix& features, const std::vector<int>& bits,
                            const std::vector<std::size_t>& rows, const SvmConfig& cfg,
                            std::vector<std::string>* warnings) {
    validate_svm_config(cfg);
    if (features.n != bits.size())
        throw ValidationError("fit_linear: " + std::to_string(features.n) + " feature rows vs " +
                              std::to_string(bits.size()) + " labels");
    if (rows.empty()) throw ValidationError("fit_linear: empty training row set");
    for (std::size_t r : rows) {
        if (r >= features.n)
            throw ValidationError("fit_linear: row index " + std::to_string(r) + " out of range");
        if (bits[r] != 0 && bits[r] != 1)
            throw ValidationError("fit_linear: labels must be 0 or 1");
    }

    LinearClassifier clf;
    clf.w.assign(features.d, 0.0);
    clf.mean.assign(features.d, 0.0);
    clf.scale.assign(features.d, 1.0);

    bool has0 = false, has1 = false;
    for (std::size_t r : rows) (bits[r] ? has1 : has0) = true;
    if (!has0 || !has1) {
        if (warnings)
            warnings->push_back("single-class training labels; returning a constant predictor");
        clf.b = has1 ? 1.0 : -1.0;
        return clf;
    }

    for (std::size_t r : rows)
        for (std::size_t j = 0; j < features.d; ++j) clf.mean[j] += features.row(r)[j];
    for (std::size_t j = 0; j < features.d; ++j)
        clf.mean[j] /= static_cast<double>(rows.size());
    for (std::size_t r : rows)
        for (std::size_t j = 0; j < features.d; ++j) {
            double dv = features.row(r)[j] - clf.mean[j];
            clf.w[j] += dv * dv;  // w doubles as the variance accumulator before training
        }
    for (std::size_t j = 0; j < features.d; ++j) {
        double var = clf.w[j] / static_cast<double>(rows.size());
        clf.scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
        clf.w[j] = 0.0;
    }

    std::vector<double> z(rows.size() * features.d);
    std::vector<double> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* x = features.row(rows[i]);
        for (std::size_t j = 0; j < features.d; ++j)
            z[i * features.d + j] = (x[j] - clf.mean[j]) / clf.scale[j];
        y[i] = bits[rows[i]] ? 1.0 : -1.0;
    }

    std::vector<double> gw(features.d);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "svm-epoch", static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order(rows.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end =
                std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
            std::fill(gw.begin(), gw.end(), 0.0);
            double gb = 0.0;
            for (std::size_t t = at; t < end; ++t) {
                std::size_t i = order[t];
                const double* zi = z.data() + i * features.d;
                double margin = clf.b;
                for (std::size_t j = 0; j < features.d; ++j) margin += clf.w[j] * zi[j];
                if (y[i] * margin < 1.0) {
                    for (std::size_t j = 0; j < features.d; ++j) gw[j] -= y[i] * zi[j];
                    gb -= y[i];
                }
            }
            double inv = 1.0 / static_cast<double>(end - at);
            for (std::size_t j = 0; j < features.d; ++j)
                clf.w[j] -= cfg.lr * (gw[j] * inv + 2.0 * cfg.lambda * clf.w[j]);
            clf.b -= cfg.lr * gb * inv;
        }
    }
    return clf;
}

AttributeAccuracy evaluate(const std::vector<LinearClassifier>& classifiers,
                           const FeatureMatrix& features,
                           const std::vector<std::vector<int>>& labels,
                           const std::vector<std::size_t>& rows) {
    if (features.n != labels.size())
        throw ValidationError("evaluate: " + std::to_string(features.n) + " feature rows vs " +
                              std::to_string(labels.size()) + " label rows");
    if (rows.empty()) throw ValidationError("evaluate: empty row set");
    AttributeAccuracy acc;
    acc.per_attribute.resize(classifiers.size(), 0.0);
    for (std::size_t k = 0; k < classifiers.size(); ++k) {
        std::size_t correct = 0;
        for (std::size_t r : rows) {
            if (r >= features.n)
                throw ValidationError("evaluate: row index out of range: " + std::to_string(r));
            if (labels[r].size() != classifiers.size())
                throw ValidationError("evaluate: label row width mismatch");
            if (classifiers[k].predict(features.row(r)) == labels[r][k]) ++correct;
        }
        acc.per_attribute[k] = 100.0 * static_cast<double>(correct) /
                               static_cast<double>(rows.size());
    }
    acc.average = std::accumulate(acc.per_attribute.begin(), acc.per_attribute.end(), 0.0) /
                  static_cast<double>(acc.per_attribute.empty() ? 1 : acc.per_attribute.size());
    return acc;
}

AttributeAccuracy attribute_net_accuracy(const ParamStore& merged, const ModelSpec& spec,
                                         const AblationMask& mask, const SampleStore& store,
                                         const std::vector<std::vector<int>>& labels,
                                         const std::vector<std::size_t>& indices,
                                         int batch_size) {
    if (indices.empty()) throw ValidationError("attribute_net_accuracy: empty index set");
    if (labels.size() != store.size())
        throw ValidationError("attribute_net_accuracy: label rows must align with the store");
    std::size_t k = labels.empty() ? 0 : labels[0].size();
    std::vector<std::size_t> correct(k, 0);
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
            for (std::size_t a = 0; a < k; ++a) {
                int pred = z[r * k + a] >= 0 ? 1 : 0;
                if (pred == labels[idx[r]][a]) ++correct[a];
            }
    }
    AttributeAccuracy acc;
    acc.per_attribute.resize(k);
    for (std::size_t a = 0; a < k; ++a)
        acc.per_attribute[a] =
            100.0 * static_cast<double>(correct[a]) / static_cast<double>(indices.size());
    acc.average = std::accumulate(acc.per_attribute.begin(), acc.per_attribute.end(), 0.0) /
                  static_cast<double>(k == 0 ? 1 : k);
    return acc;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            double fraction,
                                                                            std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ConfigError("split fraction must lie strictly between 0 and 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    std::size_t cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    cut = std::min(std::max<std::size_t>(cut, 1), n > 1 ? n - 1 : 1);
    std::vector<std::size_t> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<std::size_t> second(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    return {std::move(first), std::move(second)};
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    const std::vector<std::size_t>& pool, double fraction, std::uint64_t seed) {
    auto [first, second] = split_indices(pool.size(), fraction, seed);
    for (std::size_t& i : first) i = pool[i];
    for (std::size_t& i : second) i = pool[i];
    return {std::move(first), std::move(second)};
}

std::vector<std::size_t> labeled_pool(std::size_t n, double fraction, std::uint64_t seed) {
    if (fraction >= 1.0) {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        return all;
    }
    return split_indices(n, fraction, seed).first;
}

bool AblationResult::any_failed() const {
    for (const SeedResult& s : seeds)
        for (const ArmResult& a : s.arms)
            if (a.failed) return true;
    return false;
}

namespace {

const AttributeAccuracy& pick_path(const ArmResult& arm, const std::string& path) {
    if (path == "net") return arm.net;
    if (path == "svm") return arm.svm;
    throw ValidationError("unknown evaluation path '" + path + "' (expected net or svm)");
}

}  // namespace

std::vector<double> AblationResult::arm_mean(const std::string& arm,
                                             const std::string& path) const {
    std::vector<double> sums(static_cast<std::size_t>(n_attributes) + 1, 0.0);
    std::size_t count = 0;
    for (const SeedResult& s : seeds)
        for (const ArmResult& a : s.arms) {
            if (a.arm != arm) continue;
            if (a.failed) return {};
            const AttributeAccuracy& acc = pick_path(a, path);
            for (std::size_t k = 0; k < acc.per_attribute.size(); ++k)
                sums[k] += acc.per_attribute[k];
            sums.back() += acc.average;
            ++count;
        }
    if (count == 0) return {};
    for (double& v : sums) v /= static_cast<double>(count);
    return sums;
}

std::vector<double> AblationResult::arm_sd(const std::string& arm, const std::string& path) const {
    std::vector<double> mean = arm_mean(arm, path);
    if (mean.empty()) return {};
    std::vector<double> acc2(mean.size(), 0.0);
    std::size_t count = 0;
    for (const SeedResult& s : seeds)
        for (const ArmResult& a : s.arms) {
            if (a.arm != arm || a.failed) continue;
            const AttributeAccuracy& p = pick_path(a, path);
            for (std::size_t k = 0; k < p.per_attribute.size(); ++k) {
                double d = p.per_attribute[k] - mean[k];
                acc2[k] += d * d;
            }
            double d = p.average - mean.back();
            acc2.back() += d * d;
            ++count;
        }
    for (double& v : acc2) v = count > 1 ? std::sqrt(v / static_cast<double>(count - 1)) : 0.0;
    return acc2;
}

std::string AblationResult::table_text(const std::string& path) const {
    std::ostringstream out;
    out << "attribute accuracy (" << path << " path, mean+-sd over " << seeds.size()
        << " seeds, percent)\n";
    out << "  " << std::left;
    out.width(16);
    out << "arm";
    for (int k = 0; k < n_attributes; ++k) {
        out.width(13);
        out << ("attr" + std::to_string(k));
    }
    out.width(13);
    out << "Average";
    out << "\n";
    for (const std::string& arm : arms) {
        std::vector<double> mean = arm_mean(arm, path);
        std::vector<double> sd = arm_sd(arm, path);
        out << "  ";
        out.width(16);
        out << arm;
        if (mean.empty()) {
            out << "FAILED";
            out << "\n";
            continue;
        }
        char cell[64];
        for (std::size_t k = 0; k < mean.size(); ++k) {
            std::snprintf(cell, sizeof cell, "%5.1f+-%-4.1f ", mean[k], sd[k]);
            out << cell;
        }
        out << "\n";
    }
    return out.str();
}

std::string AblationResult::improvements_text(const std::string& path) const {
    std::ostringstream out;
    out << "average-accuracy improvement over the id arm (" << path << " path)\n";
    std::vector<double> base = arm_mean("id", path);
    for (const std::string& arm : arms) {
        if (arm == "id" || arm == "scratch") continue;
        std::vector<double> mean = arm_mean(arm, path);
        out << "  " << arm << ": ";
        if (base.empty() || mean.empty()) {
            out << "unavailable (failed arm)\n";
            continue;
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "%+.2f\n", mean.back() - base.back());
        out << buf;
    }
    return out.str();
}

std::string AblationResult::csv() const {
    std::ostringstream out;
    out << "path,arm,seed,attribute,accuracy_percent\n";
    out.precision(10);
    for (const SeedResult& s : seeds)
        for (const ArmResult& a : s.arms) {
            if (a.failed) {
                out << "net," << a.arm << "," << s.seed << ",failed,nan\n";
                continue;
            }
            for (const char* path : {"net", "svm"}) {
                const AttributeAccuracy& acc = pick_path(a, path);
                for (std::size_t k = 0; k < acc.per_attribute.size(); ++k)
                    out << path << "," << a.arm << "," << s.seed << ",attr" << k << ","
                        << acc.per_attribute[k] << "\n";
                out << path << "," << a.arm << "," << s.seed << ",average," << acc.average
                    << "\n";
            }
        }
    return out.str();
}

AblationResult run_ablation(const std::vector<std::uint64_t>& world_seeds,
                            const AblationConfig& cfg) {
    if (world_seeds.size() < 3)
        throw ValidationError("ablation needs at least 3 world seeds, got " +
                              std::to_string(world_seeds.size()));
    for (const std::string& arm : cfg.arms) {
        if (std::find(ablation_arm_names().begin(), ablation_arm_names().end(), arm) ==
            ablation_arm_names().end())
            throw ValidationError("unknown ablation arm: " + arm);
    }
    validate_model_spec(cfg.model);

    AblationResult result;
    result.arms = cfg.arms;
    for (std::uint64_t seed : world_seeds) {
        WorldConfig wc = cfg.world;
        wc.seed = seed;
        World world = generate_world(wc);
        const SampleStore& store = world.store;
        result.n_attributes = world.truth.n_attributes();
        std::vector<std::vector<int>> labels = world.truth.aligned_labels(store);

        MiningConfig mc = cfg.mining;
        mc.seed = derive_seed(seed, "ablation-mine");
        PairSet pairs = mine_pairs(store, wc.regions, mc);

        TrainConfig pt = cfg.pretrain;
        pt.seed = derive_seed(seed, "ablation-pretrain");
        auto [verif, verif_report] = pretrain_verification(store, pairs, cfg.model, pt);

        TrainConfig ct = cfg.context;
        ct.seed = derive_seed(seed, "ablation-context");
        auto [geo, geo_report] = train_context_head(verif, cfg.model, store, wc.regions,
                                                    wc.label_spec, ContextHead::geo, ct);
        auto [weather, weather_report] = train_context_head(
            verif, cfg.model, store, wc.regions, wc.label_spec, ContextHead::weather, ct);

        std::vector<std::size_t> labeled =
            labeled_pool(store.size(), cfg.labeled_fraction, derive_seed(seed, "ablation-labeled"));
        auto [train_idx, test_idx] =
            split_indices(labeled, cfg.train_fraction, derive_seed(seed, "ablation-split"));
        auto [svm_train, svm_test] =
            split_indices(labeled, 0.5, derive_seed(seed, "ablation-svm-split"));

        SeedResult seed_result;
        seed_result.seed = seed;
        for (const std::string& arm : cfg.arms) {
            ArmResult ar;
            ar.arm = arm;
            try {
                InitMode mode = arm == "scratch" ? InitMode::scratch : InitMode::pretrained;
                AblationMask mask = AblationMask::from_string(arm == "scratch" ? "id" : arm);
                TrainConfig ft = cfg.finetune;
                ft.seed = derive_seed(seed, "ablation-arm-" + arm);
                // Scratch trains at the configured rate; pre-trained arms drop
                // the base rate tenfold and let the top-layer multiplier
                // restore the head to the configured rate.
                if (mode == InitMode::pretrained) ft.lr_global = cfg.finetune.lr_global / 10.0;
                auto [merged, report] = finetune_attributes(
                    &verif, &geo, &weather, cfg.model, store, world.truth, mask, mode, train_idx,
                    ft);
                ar.finetune_seconds = report.wall_seconds;
                ar.net = attribute_net_accuracy(merged, cfg.model, mask, store, labels, test_idx,
                                                cfg.finetune.batch_size);

                std::vector<std::size_t> all(store.size());
                std::iota(all.begin(), all.end(), std::size_t{0});
                FeatureMatrix features = extract_features(merged, cfg.model, mask, store, all,
                                                          cfg.finetune.batch_size);
                std::vector<LinearClassifier> classifiers;
                for (int k = 0; k < result.n_attributes; ++k) {
                    std::vector<int> bits(store.size());
                    for (std::size_t i = 0; i < store.size(); ++i)
                        bits[i] = labels[i][static_cast<std::size_t>(k)];
                    SvmConfig sc = cfg.svm;
                    sc.seed = derive_seed(seed, "ablation-svm-" + arm, static_cast<std::uint64_t>(k));
                    classifiers.push_back(fit_linear(features, bits, svm_train, sc, nullptr));
                }
                ar.svm = evaluate(classifiers, features, labels, svm_test);
            } catch (const std::exception& e) {
                ar.failed = true;
                ar.error = e.what();
            }
            seed_result.arms.push_back(std::move(ar));
        }
        result.seeds.push_back(std::move(seed_result));
    }
    return result;
}

}  // namespace trackattr
