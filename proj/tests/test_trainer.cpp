#include <doctest.h>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "trackattr/error.hpp"
#include "trackattr/model.hpp"
#include "trackattr/pairs.hpp"
#include "trackattr/params.hpp"
#include "trackattr/trainer.hpp"
#include "trackattr/world.hpp"

using namespace trackattr;

namespace {

// World and net small enough that a full training stage takes about a
// second, with rendering favorable enough for heads to learn quickly.
WorldConfig tiny_world() {
    WorldConfig cfg;
    cfg.n_identities = 16;
    cfg.tracks_per_identity = 2;
    cfg.samples_per_track = 4;
    cfg.pose_noise_sigma = 0.5;
    cfg.lighting_noise_sigma = 0.02;
    cfg.seed = 3;
    return cfg;
}

ModelSpec tiny_spec() {
    ModelSpec spec;
    spec.conv1_filters = 4;
    spec.conv2_filters = 6;
    spec.dense1_units = 16;
    spec.dense2_units = 16;
    spec.embed_dim = 8;
    return spec;
}

TrainConfig quick_train(int epochs) {
    TrainConfig cfg;
    cfg.lr_global = 0.01;
    cfg.epochs = epochs;
    return cfg;
}

}  // namespace

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.lr_global = 0.0;
    CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
    cfg = TrainConfig{};
    cfg.margin = 0.0;
    CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
    cfg = TrainConfig{};
    cfg.epochs = 0;
    CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
    cfg = TrainConfig{};
    cfg.lr_top_multiplier = -1.0;
    CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
}

TEST_CASE("sgd step applies per-parameter multipliers") {
    ParamStore params;
    params.add("bottom.w", Tensor({2}, {1.0, 2.0}));
    params.add("top.w", Tensor({2}, {1.0, 2.0}));
    ParamStore grads;
    grads.add("bottom.w", Tensor({2}, {0.5, -0.5}));
    grads.add("top.w", Tensor({2}, {0.5, -0.5}));

    sgd_step(params, grads, 0.1, {{"top.w", 10.0}});
    CHECK(params.tensor("bottom.w").data == std::vector<double>{0.95, 2.05});
    CHECK(params.tensor("top.w").data == std::vector<double>{0.5, 2.5});

    ParamStore bad;
    bad.add("bottom.w", Tensor({2}, {std::nan(""), 0.0}));
    bad.add("top.w", Tensor({2}, {0.0, 0.0}));
    CHECK_THROWS_AS(sgd_step(params, bad, 0.1, {}), NumericError);
}

TEST_CASE("mode and head enums round-trip and pick the documented rates") {
    CHECK(init_mode_from_string("scratch") == InitMode::scratch);
    CHECK(init_mode_from_string("pretrained") == InitMode::pretrained);
    CHECK_THROWS_AS(init_mode_from_string("warm"), ValidationError);
    CHECK(context_head_from_string("geo") == ContextHead::geo);
    CHECK(context_head_from_string("weather") == ContextHead::weather);
    CHECK_THROWS_AS(context_head_from_string("time"), ValidationError);

    // Fine-tuning a pre-trained net runs tenfold slower at the base.
    CHECK(default_finetune_lr(InitMode::scratch) == 0.001);
    CHECK(default_finetune_lr(InitMode::pretrained) == 0.0001);
}

TEST_CASE("top-layer multiplier map covers the head plus active feature layers") {
    auto m = top_layer_multipliers(AblationMask::from_string("id+geo"), 10.0);
    CHECK(m.size() == 6);
    CHECK(m.at("attr.w") == 10.0);
    CHECK(m.at("attr.b") == 10.0);
    CHECK(m.at("verif.embed.w") == 10.0);
    CHECK(m.at("geo.ctx_embed.w") == 10.0);
    CHECK(m.count("weather.ctx_embed.w") == 0);

    auto full = top_layer_multipliers(AblationMask::from_string("id+geo+weather"), 10.0);
    CHECK(full.size() == 8);
    CHECK(full.at("weather.ctx_embed.b") == 10.0);
}

TEST_CASE("verification pretraining reduces loss and is replayable") {
    World world = generate_world(tiny_world());
    MiningConfig mining;
    mining.max_pos_per_track = 4;
    PairSet pairs = mine_pairs(world.store, tiny_world().regions, mining);
    REQUIRE(pairs.size() > 0);

    ModelSpec spec = tiny_spec();
    TrainConfig cfg = quick_train(8);
    cfg.margin = 2.0;

    auto [params, report] = pretrain_verification(world.store, pairs, spec, cfg);
    REQUIRE(report.epoch_mean_loss.size() == 8);
    CHECK(report.epoch_mean_loss.back() < report.epoch_mean_loss.front());
    CHECK(report.final_checksum == params.checksum());
    CHECK(params.has("embed.w"));

    auto [params2, report2] = pretrain_verification(world.store, pairs, spec, cfg);
    CHECK(params2.checksum() == params.checksum());
    CHECK(report2.epoch_mean_loss == report.epoch_mean_loss);

    cfg.seed = 99;
    auto [params3, report3] = pretrain_verification(world.store, pairs, spec, cfg);
    CHECK(params3.checksum() != params.checksum());

    CHECK_THROWS_AS(pretrain_verification(world.store, PairSet{}, spec, cfg),
                    ValidationError);
}

TEST_CASE("context training fits an easy head and leaves the source untouched") {
    WorldConfig wcfg = tiny_world();
    wcfg.region_gain = 0.2;
    World world = generate_world(wcfg);
    ModelSpec spec = tiny_spec();

    ParamStore verif = init_verification_params(spec, 1);
    std::uint64_t before = verif.checksum();

    TrainConfig cfg = quick_train(20);
    auto [geo_params, report] =
        train_context_head(verif, spec, world.store, wcfg.regions, wcfg.label_spec,
                           ContextHead::geo, cfg);
    CHECK(verif.checksum() == before);
    CHECK(geo_params.has("ctx_embed.w"));
    CHECK(geo_params.has("cls.w"));
    CHECK(report.final_train_accuracy > 60.0);
    CHECK(report.epoch_mean_loss.back() < report.epoch_mean_loss.front());

    auto [geo2, report2] =
        train_context_head(verif, spec, world.store, wcfg.regions, wcfg.label_spec,
                           ContextHead::geo, cfg);
    CHECK(geo2.checksum() == geo_params.checksum());

    auto [weather_params, wreport] =
        train_context_head(verif, spec, world.store, wcfg.regions, wcfg.label_spec,
                           ContextHead::weather, cfg);
    CHECK(weather_params.tensor("cls.w").shape ==
          std::vector<int>{spec.embed_dim, wcfg.label_spec.n_weather_classes});
}

TEST_CASE("attribute fine-tuning runs both init modes deterministically") {
    WorldConfig wcfg = tiny_world();
    World world = generate_world(wcfg);
    ModelSpec spec = tiny_spec();
    TrainConfig cfg = quick_train(5);

    ParamStore verif = init_verification_params(spec, 1);
    ParamStore geo = init_context_params(spec, 4, 2);
    ParamStore weather = init_context_params(spec, 2, 3);
    AblationMask mask = AblationMask::from_string("id+geo");

    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < world.store.size(); i += 2) train_idx.push_back(i);

    auto [tuned, report] = finetune_attributes(&verif, &geo, &weather, spec, world.store,
                                               world.truth, mask, InitMode::pretrained,
                                               train_idx, cfg);
    CHECK(tuned.has("attr.w"));
    CHECK(tuned.has("verif.embed.w"));
    CHECK(tuned.has("geo.ctx_embed.w"));
    CHECK_FALSE(tuned.has("weather.ctx_embed.w"));
    CHECK(report.epoch_mean_loss.size() == 5);
    CHECK(report.final_train_accuracy >= 0.0);

    auto [tuned2, report2] = finetune_attributes(&verif, &geo, &weather, spec, world.store,
                                                 world.truth, mask, InitMode::pretrained,
                                                 train_idx, cfg);
    CHECK(tuned2.checksum() == tuned.checksum());

    // Scratch mode needs no trained branches at all.
    auto [scratch, sreport] = finetune_attributes(nullptr, nullptr, nullptr, spec, world.store,
                                                  world.truth,
                                                  AblationMask::from_string("id"),
                                                  InitMode::scratch, {}, cfg);
    CHECK(scratch.has("verif.embed.w"));
    CHECK(scratch.checksum() != tuned.checksum());

    CHECK_THROWS_AS(finetune_attributes(nullptr, nullptr, nullptr, spec, world.store, world.truth,
                                        mask, InitMode::pretrained, {}, cfg),
                    ValidationError);

    std::vector<std::size_t> bad_idx = {world.store.size()};
    CHECK_THROWS_AS(finetune_attributes(&verif, &geo, &weather, spec, world.store, world.truth,
                                        mask, InitMode::pretrained, bad_idx, cfg),
                    ValidationError);
}

TEST_CASE("pretrained fine-tuning moves the trunk less than the top layers") {
    WorldConfig wcfg = tiny_world();
    World world = generate_world(wcfg);
    ModelSpec spec = tiny_spec();
    TrainConfig cfg = quick_train(4);
    cfg.lr_global = 0.001;
    cfg.lr_top_multiplier = 10.0;

    ParamStore verif = init_verification_params(spec, 1);
    AblationMask mask = AblationMask::from_string("id");
    auto [tuned, report] = finetune_attributes(&verif, nullptr, nullptr, spec, world.store,
                                               world.truth, mask, InitMode::pretrained, {}, cfg);

    auto rms_delta = [&](const std::string& tuned_name, const Tensor& start) {
        const Tensor& end = tuned.tensor(tuned_name);
        double ss = 0.0;
        for (std::size_t i = 0; i < end.numel(); ++i) {
            double d = end[i] - start[i];
            ss += d * d;
        }
        return std::sqrt(ss / static_cast<double>(end.numel()));
    };
    double trunk_move = rms_delta("verif.conv1.w", verif.tensor("conv1.w"));
    double top_move = rms_delta("verif.embed.w", verif.tensor("embed.w"));
    CHECK(top_move > trunk_move);
}

TEST_CASE("train report json is well formed") {
    TrainReport report;
    report.epoch_mean_loss = {0.9, 0.5};
    report.final_train_accuracy = 80.0;
    report.final_checksum = 12345;
    report.warnings.push_back("sample warning");

    nlohmann::json parsed = nlohmann::json::parse(report.to_json());
    CHECK(parsed["epoch_mean_loss"].size() == 2);
    CHECK(parsed["final_train_accuracy"] == 80.0);
    CHECK(parsed["warnings"].size() == 1);
    CHECK(report.to_text().find("80") != std::string::npos);
}
