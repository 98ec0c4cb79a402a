#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "trackattr/error.hpp"
#include "trackattr/store.hpp"
#include "trackattr/world.hpp"

using namespace trackattr;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

WorldConfig small_config() {
    WorldConfig cfg;
    cfg.n_identities = 30;
    cfg.tracks_per_identity = 2;
    cfg.samples_per_track = 4;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST_CASE("world has the configured shape") {
    WorldConfig cfg = small_config();
    World world = generate_world(cfg);

    CHECK(world.store.size() ==
          static_cast<std::size_t>(cfg.n_identities) * cfg.tracks_per_identity *
              cfg.samples_per_track);
    CHECK(world.store.tracks().size() ==
          static_cast<std::size_t>(cfg.n_identities) * cfg.tracks_per_identity);
    CHECK(world.identities.size() == static_cast<std::size_t>(cfg.n_identities));
    CHECK(world.store.height() == cfg.image_h);
    CHECK(world.store.width() == cfg.image_w);
    CHECK(world.store.channels() == cfg.image_c);
    CHECK(world.truth.size() == world.store.size());
    CHECK(world.truth.n_attributes() == cfg.n_attributes);

    for (const Track& t : world.store.tracks())
        CHECK(t.sample_indices.size() == static_cast<std::size_t>(cfg.samples_per_track));
}

TEST_CASE("samples of one track share context and attribute bits") {
    WorldConfig cfg = small_config();
    World world = generate_world(cfg);
    ContextLabelSpec spec = cfg.label_spec;

    for (const Track& t : world.store.tracks()) {
        const FaceSample& head = world.store.sample(t.sample_indices[0]);
        const std::vector<int>& head_bits = world.truth.bits(head.sample_id);
        for (std::size_t k : t.sample_indices) {
            const FaceSample& s = world.store.sample(k);
            CHECK(discretize_weather(s.weather, spec) == discretize_weather(head.weather, spec));
            CHECK(discretize_geo(s.geo, cfg.regions) == discretize_geo(head.geo, cfg.regions));
            CHECK(world.truth.bits(s.sample_id) == head_bits);
        }
    }
}

TEST_CASE("tracks of one identity stay in one region and never share a frame") {
    WorldConfig cfg = small_config();
    World world = generate_world(cfg);

    std::map<int, std::set<int>> identity_regions;
    std::map<int, std::set<std::int64_t>> identity_frames;
    int tracks_per_identity = cfg.tracks_per_identity;
    for (const Track& t : world.store.tracks()) {
        int identity = static_cast<int>(t.track_id) / tracks_per_identity;
        for (std::size_t k : t.sample_indices) {
            const FaceSample& s = world.store.sample(k);
            identity_regions[identity].insert(discretize_geo(s.geo, cfg.regions));
            // Same-identity windows must not overlap, or negatives mined on
            // equal frames could pair one person with themselves.
            CHECK(identity_frames[identity].insert(s.frame_index).second);
        }
    }
    for (const auto& [identity, regions] : identity_regions) CHECK(regions.size() == 1);
}

TEST_CASE("equal frame indices recur across identities") {
    World world = generate_world(small_config());
    std::map<std::int64_t, std::set<std::int64_t>> tracks_by_frame;
    for (const FaceSample& s : world.store.samples())
        tracks_by_frame[s.frame_index].insert(s.track_id);
    std::size_t shared = 0;
    for (const auto& [frame, tracks] : tracks_by_frame)
        if (tracks.size() > 1) ++shared;
    CHECK(shared > 0);
}

TEST_CASE("world generation is deterministic and seed-sensitive") {
    WorldConfig cfg = small_config();
    World a = generate_world(cfg);
    World b = generate_world(cfg);

    std::string pa = testsupport::temp_path("world-a.jsonl");
    std::string pb = testsupport::temp_path("world-b.jsonl");
    save_store(a.store, pa);
    save_store(b.store, pb);
    CHECK(read_file(pa) == read_file(pb));

    std::string ta = testsupport::temp_path("truth-a.csv");
    std::string tb = testsupport::temp_path("truth-b.csv");
    a.truth.save_csv(ta);
    b.truth.save_csv(tb);
    CHECK(read_file(ta) == read_file(tb));

    cfg.seed = 6;
    World c = generate_world(cfg);
    std::string pc = testsupport::temp_path("world-c.jsonl");
    save_store(c.store, pc);
    CHECK(read_file(pa) != read_file(pc));

    for (const std::string& p : {pa, pb, pc, ta, tb}) std::remove(p.c_str());
}

TEST_CASE("attribute bits track their context sources at the configured rate") {
    WorldConfig cfg;
    cfg.n_identities = 400;
    cfg.tracks_per_identity = 2;
    cfg.samples_per_track = 2;
    cfg.region_attribute_bias = 0.9;
    cfg.weather_attribute_bias = 0.8;
    cfg.seed = 17;
    World world = generate_world(cfg);

    WorldStats stats = world_stats(world.store, world.truth, cfg.regions, cfg.label_spec);

    // Agreement is a mean of independent Bernoulli draws; 5 sigma keeps the
    // flake rate negligible. Attribute 0 is drawn once per identity (400
    // draws), attribute 1 once per track (800 draws).
    double sd0 = std::sqrt(0.9 * 0.1 / 400.0);
    double sd1 = std::sqrt(0.8 * 0.2 / 800.0);
    CHECK(std::abs(stats.attr0_region_agreement - 0.9) < 5.0 * sd0);
    CHECK(std::abs(stats.attr1_weather_agreement - 0.8) < 5.0 * sd1);

    // The remaining attributes are fair coins per identity.
    for (int k = 2; k < cfg.n_attributes; ++k)
        CHECK(std::abs(stats.attribute_marginals[static_cast<std::size_t>(k)] - 0.5) <
              5.0 * std::sqrt(0.25 / 400.0));

    cfg.region_attribute_bias = 1.0;
    cfg.weather_attribute_bias = 1.0;
    World exact = generate_world(cfg);
    WorldStats exact_stats = world_stats(exact.store, exact.truth, cfg.regions, cfg.label_spec);
    CHECK(exact_stats.attr0_region_agreement == 1.0);
    CHECK(exact_stats.attr1_weather_agreement == 1.0);
}

TEST_CASE("world stats agree with direct counting") {
    WorldConfig cfg = small_config();
    World world = generate_world(cfg);
    WorldStats stats = world_stats(world.store, world.truth, cfg.regions, cfg.label_spec);

    CHECK(stats.n_tracks == world.store.tracks().size());
    CHECK(stats.n_samples == world.store.size());

    std::vector<std::size_t> per_region(static_cast<std::size_t>(cfg.regions.n_regions()), 0);
    std::vector<std::size_t> per_weather(
        static_cast<std::size_t>(cfg.label_spec.n_weather_classes), 0);
    std::vector<double> marginals(static_cast<std::size_t>(cfg.n_attributes), 0.0);
    for (const FaceSample& s : world.store.samples()) {
        ++per_region[static_cast<std::size_t>(discretize_geo(s.geo, cfg.regions))];
        ++per_weather[static_cast<std::size_t>(discretize_weather(s.weather, cfg.label_spec))];
        const std::vector<int>& bits = world.truth.bits(s.sample_id);
        for (int k = 0; k < cfg.n_attributes; ++k)
            marginals[static_cast<std::size_t>(k)] += bits[static_cast<std::size_t>(k)];
    }
    for (double& m : marginals) m /= static_cast<double>(world.store.size());

    CHECK(stats.per_region == per_region);
    CHECK(stats.per_weather == per_weather);
    REQUIRE(stats.attribute_marginals.size() == marginals.size());
    for (std::size_t k = 0; k < marginals.size(); ++k)
        CHECK(stats.attribute_marginals[k] == doctest::Approx(marginals[k]).epsilon(1e-12));
}

TEST_CASE("attribute templates have unit rms and differ per attribute") {
    int h = 16, w = 16;
    for (int k = 0; k < 8; ++k) {
        std::vector<double> tmpl = attribute_template(k, h, w);
        REQUIRE(tmpl.size() == static_cast<std::size_t>(h) * w);
        double ss = 0.0;
        for (double v : tmpl) ss += v * v;
        CHECK(std::sqrt(ss / static_cast<double>(tmpl.size())) ==
              doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(attribute_template(0, h, w) != attribute_template(1, h, w));
}

TEST_CASE("pixel values stay in range under heavy noise") {
    WorldConfig cfg = small_config();
    cfg.lighting_noise_sigma = 0.5;
    cfg.pose_noise_sigma = 6.0;
    World world = generate_world(cfg);
    for (const FaceSample& s : world.store.samples())
        for (double p : s.image) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
        }
}

TEST_CASE("world config validation rejects bad values") {
    WorldConfig cfg;
    cfg.n_identities = 0;
    CHECK_THROWS_AS(validate_world_config(cfg), ConfigError);

    cfg = WorldConfig{};
    cfg.region_attribute_bias = 1.5;
    CHECK_THROWS_AS(validate_world_config(cfg), ConfigError);

    cfg = WorldConfig{};
    cfg.weather_attribute_bias = -0.1;
    CHECK_THROWS_AS(validate_world_config(cfg), ConfigError);

    cfg = WorldConfig{};
    cfg.n_attributes = 1;
    CHECK_THROWS_AS(validate_world_config(cfg), ConfigError);

    cfg = WorldConfig{};
    cfg.image_h = 0;
    CHECK_THROWS_AS(validate_world_config(cfg), ConfigError);
}

TEST_CASE("attribute truth csv round-trip") {
    World world = generate_world(small_config());
    std::string path = testsupport::temp_path("truth.csv");
    world.truth.save_csv(path);
    AttributeTruth loaded = AttributeTruth::load_csv(path);
    REQUIRE(loaded.size() == world.truth.size());
    REQUIRE(loaded.n_attributes() == world.truth.n_attributes());
    for (const FaceSample& s : world.store.samples())
        CHECK(loaded.bits(s.sample_id) == world.truth.bits(s.sample_id));

    auto aligned = loaded.aligned_labels(world.store);
    REQUIRE(aligned.size() == world.store.size());
    for (std::size_t i = 0; i < world.store.size(); ++i)
        CHECK(aligned[i] == world.truth.bits(world.store.sample(i).sample_id));
    std::remove(path.c_str());
}
