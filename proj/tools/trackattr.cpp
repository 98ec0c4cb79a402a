// Pipeline driver: every subcommand fronts one library stage and exchanges
// fixed-name artifacts through the output directory, so a full run is a
// sequence of commands over one config file.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "trackattr/checkpoint.hpp"
#include "trackattr/config.hpp"
#include "trackattr/error.hpp"
#include "trackattr/evaluator.hpp"
#include "trackattr/introspect.hpp"
#include "trackattr/model.hpp"
#include "trackattr/pairs.hpp"
#include "trackattr/rng.hpp"
#include "trackattr/store.hpp"
#include "trackattr/trainer.hpp"
#include "trackattr/world.hpp"

namespace fs = std::filesystem;
using namespace trackattr;

namespace {

// Input artifact absent: the user skipped a pipeline stage.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_input(const fs::path& path, const std::string& producer) {
    if (!fs::exists(path)) {
        throw UsageError("missing input " + path.string() + "; produce it with `trackattr " +
                         producer + "` first");
    }
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("short write to " + path.string());
}

void write_resolved(const RunConfig& cfg, const fs::path& dir) {
    write_text_file(dir / "resolved.ini", resolved_text(cfg));
}

std::string mask_slug(const AblationMask& mask) {
    std::string s = mask.to_string();
    for (char& c : s) {
        if (c == '+') c = '-';
    }
    return s;
}

ParamStore load_params_checked(const fs::path& path, const ModelSpec& spec,
                               const std::string& producer) {
    require_input(path, producer);
    LoadedCheckpoint ck = load_checkpoint(path.string());
    if (ck.spec_echo != spec_echo(spec)) {
        throw ConfigError("checkpoint " + path.string() + " was written for model '" +
                          ck.spec_echo + "' but the config resolves to '" + spec_echo(spec) + "'");
    }
    return std::move(ck.params);
}

SampleStore load_tracks(const fs::path& out) {
    require_input(out / "tracks.jsonl", "gen-world");
    return load_store((out / "tracks.jsonl").string());
}

GeoRegionSet load_regions(const fs::path& out, const ModelSpec& spec) {
    require_input(out / "regions.csv", "gen-world");
    GeoRegionSet regions = GeoRegionSet::load_csv((out / "regions.csv").string());
    if (regions.n_regions() != spec.n_geo_classes) {
        throw ConfigError("regions.csv has " + std::to_string(regions.n_regions()) +
                          " regions but the model expects " + std::to_string(spec.n_geo_classes) +
                          " location classes");
    }
    return regions;
}

AttributeTruth load_truth(const fs::path& out) {
    require_input(out / "truth.csv", "gen-world");
    return AttributeTruth::load_csv((out / "truth.csv").string());
}

int cmd_gen_world(const RunConfig& cfg, const fs::path& out) {
    WorldConfig wc = cfg.world;
    wc.seed = cfg.seed;
    World world = generate_world(wc);
    save_store(world.store, (out / "tracks.jsonl").string());
    wc.regions.save_csv((out / "regions.csv").string());
    world.truth.save_csv((out / "truth.csv").string());
    WorldStats stats = world_stats(world.store, world.truth, wc.regions, wc.label_spec);
    write_text_file(out / "world_stats.json", to_json(stats));
    std::cout << to_text(stats);
    return 0;
}

int cmd_mine_pairs(const RunConfig& cfg, const fs::path& out) {
    SampleStore store = load_tracks(out);
    GeoRegionSet regions = load_regions(out, cfg.model);
    MiningConfig mc = cfg.mining;
    mc.seed = derive_seed(cfg.seed, "mine");
    PairSet pairs = mine_pairs(store, regions, mc);
    save_pairs_csv(pairs, (out / "pairs.csv").string());
    std::cout << pair_stats_text(pairs);
    return 0;
}

int cmd_pretrain(const RunConfig& cfg, const fs::path& out) {
    SampleStore store = load_tracks(out);
    require_input(out / "pairs.csv", "mine-pairs");
    PairSet pairs = load_pairs_csv((out / "pairs.csv").string());
    TrainConfig tc = cfg.pretrain;
    tc.seed = derive_seed(cfg.seed, "pretrain");
    auto [params, report] = pretrain_verification(store, pairs, cfg.model, tc);
    save_checkpoint((out / "verif.ckpt").string(), spec_echo(cfg.model), params);
    write_text_file(out / "pretrain_report.json", report.to_json());
    std::cout << report.to_text();
    return 0;
}

int cmd_train_context(const RunConfig& cfg, const fs::path& out) {
    SampleStore store = load_tracks(out);
    GeoRegionSet regions = load_regions(out, cfg.model);
    ParamStore verif = load_params_checked(out / "verif.ckpt", cfg.model, "pretrain");
    TrainConfig tc = cfg.context;
    tc.seed = derive_seed(cfg.seed, "context");
    for (ContextHead head : {ContextHead::geo, ContextHead::weather}) {
        auto [params, report] =
            train_context_head(verif, cfg.model, store, regions, cfg.world.label_spec, head, tc);
        std::string name = to_string(head);
        save_checkpoint((out / (name + ".ckpt")).string(), spec_echo(cfg.model), params);
        write_text_file(out / ("context_" + name + "_report.json"), report.to_json());
        std::cout << name << " head:\n" << report.to_text();
    }
    return 0;
}

// Fine-tune base rate: the configured value from scratch, a tenth of it on a
// pre-trained start (the top-layer multiplier then restores the head).
double finetune_lr(const RunConfig& cfg, InitMode mode) {
    return mode == InitMode::pretrained ? cfg.finetune.lr_global / 10.0 : cfg.finetune.lr_global;
}

int cmd_finetune(const RunConfig& cfg, const fs::path& out, const std::string& mask_str,
                 const std::string& init_str) {
    AblationMask mask = AblationMask::from_string(mask_str);
    InitMode mode = init_mode_from_string(init_str);
    SampleStore store = load_tracks(out);
    AttributeTruth truth = load_truth(out);

    ParamStore verif, geo, weather;
    const ParamStore* verif_p = nullptr;
    const ParamStore* geo_p = nullptr;
    const ParamStore* weather_p = nullptr;
    if (mode == InitMode::pretrained) {
        if (mask.use_verif) {
            verif = load_params_checked(out / "verif.ckpt", cfg.model, "pretrain");
            verif_p = &verif;
        }
        if (mask.use_geo) {
            geo = load_params_checked(out / "geo.ckpt", cfg.model, "train-context");
            geo_p = &geo;
        }
        if (mask.use_weather) {
            weather = load_params_checked(out / "weather.ckpt", cfg.model, "train-context");
            weather_p = &weather;
        }
    }

    TrainConfig tc = cfg.finetune;
    tc.seed = derive_seed(cfg.seed, "finetune");
    tc.lr_global = finetune_lr(cfg, mode);
    std::vector<std::size_t> labeled =
        labeled_pool(store.size(), cfg.labeled_fraction, derive_seed(cfg.seed, "labeled"));
    auto [train_idx, test_idx] =
        split_indices(labeled, cfg.train_fraction, derive_seed(cfg.seed, "split"));
    (void)test_idx;
    auto [merged, report] = finetune_attributes(verif_p, geo_p, weather_p, cfg.model, store, truth,
                                                mask, mode, train_idx, tc);
    std::string tag = init_str + "_" + mask_slug(mask);
    save_checkpoint((out / ("attr_" + tag + ".ckpt")).string(), spec_echo(cfg.model), merged);
    write_text_file(out / ("finetune_" + tag + ".json"), report.to_json());
    std::cout << report.to_text();
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const fs::path& out, const std::string& mask_str,
                 const std::string& init_str) {
    AblationMask mask = AblationMask::from_string(mask_str);
    init_mode_from_string(init_str);
    SampleStore store = load_tracks(out);
    AttributeTruth truth = load_truth(out);
    std::string tag = init_str + "_" + mask_slug(mask);
    ParamStore merged = load_params_checked(
        out / ("attr_" + tag + ".ckpt"), cfg.model,
        "finetune --init " + init_str + " --mask " + mask.to_string());

    std::vector<std::vector<int>> labels = truth.aligned_labels(store);
    int n_attributes = truth.n_attributes();
    std::vector<std::string> warnings;

    std::vector<std::size_t> labeled =
        labeled_pool(store.size(), cfg.labeled_fraction, derive_seed(cfg.seed, "labeled"));
    auto [train_idx, test_idx] =
        split_indices(labeled, cfg.train_fraction, derive_seed(cfg.seed, "split"));
    (void)train_idx;
    AttributeAccuracy net = attribute_net_accuracy(merged, cfg.model, mask, store, labels,
                                                   test_idx, cfg.finetune.batch_size);

    std::vector<std::size_t> all(store.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    FeatureMatrix features =
        extract_features(merged, cfg.model, mask, store, all, cfg.finetune.batch_size);
    auto [svm_train, svm_test] = split_indices(labeled, 0.5, derive_seed(cfg.seed, "svm-split"));
    std::vector<LinearClassifier> classifiers;
    for (int k = 0; k < n_attributes; ++k) {
        std::vector<int> bits(store.size());
        for (std::size_t i = 0; i < store.size(); ++i) bits[i] = labels[i][static_cast<std::size_t>(k)];
        SvmConfig sc = cfg.svm;
        sc.seed = derive_seed(cfg.seed, "svm", static_cast<std::uint64_t>(k));
        classifiers.push_back(fit_linear(features, bits, svm_train, sc, &warnings));
    }
    AttributeAccuracy svm = evaluate(classifiers, features, labels, svm_test);

    nlohmann::ordered_json j;
    j["mask"] = mask.to_string();
    j["init"] = init_str;
    j["net"] = {{"per_attribute", net.per_attribute}, {"average", net.average}};
    j["svm"] = {{"per_attribute", svm.per_attribute}, {"average", svm.average}};
    j["warnings"] = warnings;
    write_text_file(out / ("eval_" + tag + ".json"), j.dump(2) + "\n");

    std::ostringstream text;
    text << "arm " << init_str << " / " << mask.to_string() << "\n";
    const auto line = [&text](const char* path, const AttributeAccuracy& acc) {
        text << "  " << path << ":";
        for (double a : acc.per_attribute) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), " %.2f", a);
            text << buf;
        }
        char avg[48];
        std::snprintf(avg, sizeof(avg), "  average %.2f\n", acc.average);
        text << avg;
    };
    line("net", net);
    line("svm", svm);
    for (const std::string& w : warnings) text << "  warning: " << w << "\n";
    std::cout << text.str();
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const fs::path& out) {
    AblationResult result = run_ablation(cfg.ablate_seeds, cfg.ablation());
    char hash8[16];
    std::snprintf(hash8, sizeof(hash8), "%08llx",
                  static_cast<unsigned long long>(config_hash(cfg) >> 32));
    fs::path dir = out / (std::string("ablate-") + hash8);
    fs::create_directories(dir);
    write_resolved(cfg, dir);
    write_text_file(dir / "ablation.csv", result.csv());
    write_text_file(dir / "table_net.txt", result.table_text("net"));
    write_text_file(dir / "table_svm.txt", result.table_text("svm"));
    write_text_file(dir / "improvements_net.txt", result.improvements_text("net"));
    write_text_file(dir / "improvements_svm.txt", result.improvements_text("svm"));
    std::cout << "wrote " << dir.string() << "\n\n"
              << result.table_text("net") << "\n"
              << result.improvements_text("net");
    if (result.any_failed()) {
        for (const SeedResult& sr : result.seeds) {
            for (const ArmResult& ar : sr.arms) {
                if (ar.failed) {
                    std::cerr << "arm " << ar.arm << " seed " << sr.seed << " failed: " << ar.error
                              << "\n";
                }
            }
        }
        std::cerr << "error: ablation finished with failed arms; results are partial\n";
        return 3;
    }
    return 0;
}

int cmd_inspect(const RunConfig& cfg, const fs::path& out) {
    SampleStore store = load_tracks(out);
    std::vector<int> labels;
    int n_classes = 0;
    fs::path ckpt;
    std::string producer;
    if (cfg.introspect_model == "geo") {
        ckpt = out / "geo.ckpt";
        producer = "train-context";
        labels = store.geo_labels(load_regions(out, cfg.model));
        n_classes = cfg.model.n_geo_classes;
    } else if (cfg.introspect_model == "weather") {
        ckpt = out / "weather.ckpt";
        producer = "train-context";
        labels = store.weather_labels(cfg.world.label_spec);
        n_classes = cfg.model.n_weather_classes;
    } else {
        // The verification branch has no labels of its own; condition on the
        // location classes to probe what it picked up implicitly.
        ckpt = out / "verif.ckpt";
        producer = "pretrain";
        labels = store.geo_labels(load_regions(out, cfg.model));
        n_classes = cfg.model.n_geo_classes;
    }
    ParamStore params = load_params_checked(ckpt, cfg.model, producer);
    std::vector<NeuronReport> reports =
        top_neurons_per_class(params, cfg.model, store, labels, n_classes, cfg.introspect);
    std::string tag = cfg.introspect_model + "_" + cfg.introspect.layer;
    write_text_file(out / ("introspect_" + tag + ".json"), neuron_report_json(reports));
    if (cfg.introspect_dump_images) {
        fs::path dir = out / "neurons" / tag;
        fs::create_directories(dir);
        for (const NeuronReport& r : reports) {
            for (std::int64_t sid : r.top_sample_ids) {
                std::ostringstream name;
                name << "class" << r.class_id << "_rank" << r.rank << "_neuron" << r.neuron
                     << "_sample" << sid << ".pgm";
                save_pgm(store, sid, (dir / name.str()).string());
            }
        }
    }
    for (const NeuronReport& r : reports) {
        std::cout << cfg.introspect.layer << " class " << r.class_id << " rank " << r.rank
                  << ": neuron " << r.neuron << " score " << r.class_score << "\n";
    }
    return 0;
}

int cmd_stats(const RunConfig& cfg, const fs::path& out) {
    SampleStore store = load_tracks(out);
    GeoRegionSet regions = load_regions(out, cfg.model);
    AttributeTruth truth = load_truth(out);
    require_input(out / "pairs.csv", "mine-pairs");
    PairSet pairs = load_pairs_csv((out / "pairs.csv").string());

    std::set<std::int64_t> frames;
    for (const FaceSample& s : store.samples()) frames.insert(s.frame_index);

    std::ostringstream text;
    text << "dataset summary\n";
    text << "  tracks            " << store.tracks().size() << "\n";
    text << "  face images       " << store.size() << "\n";
    text << "  distinct frames   " << frames.size() << "\n";
    text << "  regions           " << regions.n_regions() << "\n";
    text << "  attributes        " << truth.n_attributes() << "\n";
    text << pair_stats_text(pairs);
    text << to_text(world_stats(store, truth, regions, cfg.world.label_spec));
    write_text_file(out / "stats.txt", text.str());
    std::cout << text.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"face-track context pipeline: synthetic world, pair mining, staged "
                 "training, ablation, introspection"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::uint64_t seed_override = 0;
    std::string out_override;
    app.add_option("--config", config_path, "INI-style sections config file");
    app.add_option("--seed", seed_override, "override the run seed");
    app.add_option("--out", out_override, "override the output directory");

    std::string mask_str = "id+geo+weather";
    std::string init_str = "pretrained";
    CLI::App* gen = app.add_subcommand("gen-world", "generate the synthetic track dataset");
    CLI::App* mine = app.add_subcommand("mine-pairs", "mine verification pairs from tracks");
    CLI::App* pre = app.add_subcommand("pretrain", "train the verification model on pairs");
    CLI::App* ctx = app.add_subcommand("train-context", "train both context heads");
    CLI::App* fine = app.add_subcommand("finetune", "fine-tune the attribute model");
    CLI::App* eval = app.add_subcommand("evaluate", "score a fine-tuned attribute model");
    CLI::App* abl = app.add_subcommand("ablate", "run the full arm-by-seed comparison");
    CLI::App* insp = app.add_subcommand("inspect", "rank neurons by class activation");
    CLI::App* stats = app.add_subcommand("stats", "summarize dataset and pair artifacts");
    for (CLI::App* sub : {fine, eval}) {
        sub->add_option("--mask", mask_str, "feature branches: id, id+geo, id+weather, id+geo+weather");
        sub->add_option("--init", init_str, "scratch or pretrained");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = config_path.empty() ? default_run_config() : load_run_config(config_path);
        if (app.count("--seed") > 0) cfg.seed = seed_override;
        if (app.count("--out") > 0) cfg.out_dir = out_override;
        fs::path out(cfg.out_dir);
        fs::create_directories(out);
        write_resolved(cfg, out);

        if (gen->parsed()) return cmd_gen_world(cfg, out);
        if (mine->parsed()) return cmd_mine_pairs(cfg, out);
        if (pre->parsed()) return cmd_pretrain(cfg, out);
        if (ctx->parsed()) return cmd_train_context(cfg, out);
        if (fine->parsed()) return cmd_finetune(cfg, out, mask_str, init_str);
        if (eval->parsed()) return cmd_evaluate(cfg, out, mask_str, init_str);
        if (abl->parsed()) return cmd_ablate(cfg, out);
        if (insp->parsed()) return cmd_inspect(cfg, out);
        if (stats->parsed()) return cmd_stats(cfg, out);
        std::cerr << "error: no command\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
