#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "trackattr/error.hpp"
#include "trackattr/evaluator.hpp"
#include "trackattr/model.hpp"
#include "trackattr/params.hpp"
#include "trackattr/rng.hpp"
#include "trackattr/world.hpp"

using namespace trackattr;

namespace {

// Two well-separated Gaussian blobs, one per class.
FeatureMatrix blob_features(std::size_t n, std::size_t d, double separation,
                            std::vector<int>& bits, std::uint64_t seed) {
    Rng rng(seed);
    FeatureMatrix f;
    f.n = n;
    f.d = d;
    f.values.resize(n * d);
    bits.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        bits[i] = rng.bernoulli(0.5) ? 1 : 0;
        double center = bits[i] == 1 ? separation / 2.0 : -separation / 2.0;
        for (std::size_t j = 0; j < d; ++j)
            f.values[i * d + j] = center + rng.normal(0.0, 1.0);
    }
    return f;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    return rows;
}

}  // namespace

TEST_CASE("split indices partition deterministically") {
    auto [train, test] = split_indices(100, 0.8, 42);
    CHECK(train.size() == 80);
    CHECK(test.size() == 20);
    CHECK(std::is_sorted(train.begin(), train.end()));
    CHECK(std::is_sorted(test.begin(), test.end()));

    std::set<std::size_t> all(train.begin(), train.end());
    all.insert(test.begin(), test.end());
    CHECK(all.size() == 100);
    CHECK(*all.rbegin() == 99);

    auto [train2, test2] = split_indices(100, 0.8, 42);
    CHECK(train2 == train);
    auto [train3, test3] = split_indices(100, 0.8, 43);
    CHECK(train3 != train);

    // Extreme fractions still leave both sides non-empty.
    auto [tiny_train, tiny_test] = split_indices(10, 0.999, 1);
    CHECK(tiny_test.size() == 1);
    auto [small_train, small_test] = split_indices(10, 0.001, 1);
    CHECK(small_train.size() == 1);
    CHECK_THROWS_AS(split_indices(100, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(split_indices(100, 1.0, 1), ConfigError);
}

TEST_CASE("pool split maps positions through the pool") {
    std::vector<std::size_t> pool = {3, 7, 11, 20, 21, 40, 41, 55, 90, 91};
    auto [train, test] = split_indices(pool, 0.8, 7);
    CHECK(train.size() == 8);
    CHECK(test.size() == 2);
    std::set<std::size_t> pool_set(pool.begin(), pool.end());
    std::set<std::size_t> both;
    for (std::size_t i : train) {
        CHECK(pool_set.count(i) == 1);
        both.insert(i);
    }
    for (std::size_t i : test) {
        CHECK(pool_set.count(i) == 1);
        both.insert(i);
    }
    CHECK(both.size() == pool.size());

    // Same seed, same fraction: positions chosen are the same, so mapping
    // through 0..n-1 must reproduce the plain overload.
    auto [plain_train, plain_test] = split_indices(pool.size(), 0.8, 7);
    std::vector<std::size_t> mapped;
    for (std::size_t pos : plain_train) mapped.push_back(pool[pos]);
    std::sort(mapped.begin(), mapped.end());
    CHECK(mapped == train);
}

TEST_CASE("labeled pool selects a seeded fraction or everything") {
    std::vector<std::size_t> everything = labeled_pool(50, 1.0, 9);
    CHECK(everything.size() == 50);
    CHECK(everything.front() == 0);
    CHECK(everything.back() == 49);

    std::vector<std::size_t> third = labeled_pool(90, 0.3, 9);
    CHECK(third.size() == 27);
    CHECK(std::is_sorted(third.begin(), third.end()));
    CHECK(labeled_pool(90, 0.3, 9) == third);
    CHECK(labeled_pool(90, 0.3, 10) != third);
}

TEST_CASE("svm config validation") {
    SvmConfig cfg;
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(validate_svm_config(cfg), ConfigError);
    cfg = SvmConfig{};
    cfg.lr = 0.0;
    CHECK_THROWS_AS(validate_svm_config(cfg), ConfigError);
    cfg = SvmConfig{};
    cfg.epochs = 0;
    CHECK_THROWS_AS(validate_svm_config(cfg), ConfigError);
    cfg = SvmConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(validate_svm_config(cfg), ConfigError);
}

TEST_CASE("linear classifier separates well-separated blobs completely") {
    std::vector<int> bits;
    FeatureMatrix f = blob_features(200, 6, 12.0, bits, 31);
    SvmConfig cfg;
    std::vector<std::string> warnings;
    LinearClassifier clf = fit_linear(f, bits, all_rows(f.n), cfg, &warnings);
    CHECK(warnings.empty());

    std::size_t correct = 0;
    for (std::size_t i = 0; i < f.n; ++i)
        if (clf.predict(f.row(i)) == bits[i]) ++correct;
    CHECK(correct == f.n);
}

TEST_CASE("linear classifier scores chance on label-randomized features") {
    std::vector<int> bits;
    FeatureMatrix f = blob_features(400, 6, 12.0, bits, 33);

    // Shuffling the labels destroys the feature-label relation; held-out
    // accuracy must fall within 3 binomial standard deviations of 50%.
    Rng rng(77);
    std::vector<int> shuffled = bits;
    rng.shuffle(shuffled);

    auto [train_rows, test_rows] = split_indices(f.n, 0.5, 5);
    SvmConfig cfg;
    std::vector<std::string> warnings;
    LinearClassifier clf = fit_linear(f, shuffled, train_rows, cfg, &warnings);

    std::size_t correct = 0;
    for (std::size_t i : test_rows)
        if (clf.predict(f.row(i)) == shuffled[i]) ++correct;
    double acc = static_cast<double>(correct) / static_cast<double>(test_rows.size());
    double sigma = std::sqrt(0.25 / static_cast<double>(test_rows.size()));
    CHECK(std::abs(acc - 0.5) < 3.0 * sigma);
}

TEST_CASE("single-class training degenerates to a constant predictor with a warning") {
    std::vector<int> bits(40, 1);
    FeatureMatrix f;
    f.n = 40;
    f.d = 3;
    f.values.assign(f.n * f.d, 0.0);
    Rng rng(13);
    for (double& v : f.values) v = rng.uniform(-1.0, 1.0);

    SvmConfig cfg;
    std::vector<std::string> warnings;
    LinearClassifier clf = fit_linear(f, bits, all_rows(f.n), cfg, &warnings);
    CHECK(warnings.size() == 1);
    for (std::size_t i = 0; i < f.n; ++i) CHECK(clf.predict(f.row(i)) == 1);
}

TEST_CASE("decision ties at the margin go to class 1") {
    LinearClassifier clf;
    clf.w = {1.0, 0.0};
    clf.b = 0.0;
    clf.mean = {0.0, 0.0};
    clf.scale = {1.0, 1.0};
    double on_boundary[2] = {0.0, 5.0};
    CHECK(clf.decision(on_boundary) == 0.0);
    CHECK(clf.predict(on_boundary) == 1);
    double below[2] = {-0.1, 5.0};
    CHECK(clf.predict(below) == 0);
}

TEST_CASE("accuracy evaluation counts exactly") {
    // Two attributes, four rows, hand-set weights: classifier 0 predicts
    // sign of feature 0, classifier 1 always predicts class 1.
    FeatureMatrix f;
    f.n = 4;
    f.d = 2;
    f.values = {1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0};

    LinearClassifier by_sign;
    by_sign.w = {1.0, 0.0};
    by_sign.b = 0.0;
    by_sign.mean = {0.0, 0.0};
    by_sign.scale = {1.0, 1.0};
    LinearClassifier always_one = by_sign;
    always_one.w = {0.0, 0.0};
    always_one.b = 1.0;

    std::vector<std::vector<int>> labels = {
        {1, 1}, {0, 1}, {0, 0}, {1, 0}};  // row-major, one row per sample

    AttributeAccuracy acc =
        evaluate({by_sign, always_one}, f, labels, all_rows(f.n));
    // Attribute 0: predictions 1,0,1,0 against 1,0,0,1 -> 2/4. Attribute 1:
    // always 1 against 1,1,0,0 -> 2/4.
    REQUIRE(acc.per_attribute.size() == 2);
    CHECK(acc.per_attribute[0] == 50.0);
    CHECK(acc.per_attribute[1] == 50.0);
    CHECK(acc.average == 50.0);

    AttributeAccuracy subset = evaluate({by_sign, always_one}, f, labels, {0, 1});
    CHECK(subset.per_attribute[0] == 100.0);
    CHECK(subset.per_attribute[1] == 100.0);
}

TEST_CASE("feature extraction follows the mask layout and requested rows") {
    ModelSpec spec;
    spec.image_h = 8;
    spec.image_w = 8;
    spec.conv1_filters = 2;
    spec.conv2_filters = 3;
    spec.dense1_units = 8;
    spec.dense2_units = 8;
    spec.embed_dim = 4;

    WorldConfig wcfg;
    wcfg.n_identities = 6;
    wcfg.tracks_per_identity = 1;
    wcfg.samples_per_track = 3;
    wcfg.image_h = 8;
    wcfg.image_w = 8;
    World world = generate_world(wcfg);

    ParamStore merged;
    merged.add_all(init_verification_params(spec, 1), "verif.");
    merged.add_all(init_context_params(spec, 4, 2), "geo.");

    AblationMask mask = AblationMask::from_string("id+geo");
    std::vector<std::size_t> rows = {0, 2, 5, 9};
    FeatureMatrix f = extract_features(merged, spec, mask, world.store, rows, 3);
    CHECK(f.n == rows.size());
    CHECK(f.d == static_cast<std::size_t>(mask.feature_dim(spec)));

    // Rows are independent of the batching cut.
    FeatureMatrix g = extract_features(merged, spec, mask, world.store, rows, 64);
    CHECK(f.values == g.values);

    // The verification half equals the single-branch extraction.
    FeatureMatrix id_only = extract_features(merged, spec, AblationMask::from_string("id"),
                                             world.store, rows, 64);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int c = 0; c < spec.embed_dim; ++c)
            CHECK(f.values[r * f.d + static_cast<std::size_t>(c)] ==
                  id_only.values[r * id_only.d + static_cast<std::size_t>(c)]);
}

TEST_CASE("ablation bookkeeping aggregates means and flags failures") {
    AblationResult result;
    result.n_attributes = 2;
    result.arms = {"id", "id+geo"};
    for (std::uint64_t seed : {1, 2, 3}) {
        SeedResult sr;
        sr.seed = seed;
        ArmResult id_arm;
        id_arm.arm = "id";
        id_arm.net.per_attribute = {60.0 + seed, 70.0 + seed};
        id_arm.net.average = (id_arm.net.per_attribute[0] + id_arm.net.per_attribute[1]) / 2.0;
        id_arm.svm = id_arm.net;
        ArmResult geo_arm = id_arm;
        geo_arm.arm = "id+geo";
        sr.arms = {id_arm, geo_arm};
        result.seeds.push_back(sr);
    }
    CHECK_FALSE(result.any_failed());
    std::vector<double> mean = result.arm_mean("id", "net");
    REQUIRE(mean.size() == 3);  // per attribute plus the average
    CHECK(mean[0] == doctest::Approx(62.0));
    CHECK(mean[1] == doctest::Approx(72.0));
    CHECK(mean[2] == doctest::Approx(67.0));
    std::vector<double> sd = result.arm_sd("id", "net");
    CHECK(sd[0] == doctest::Approx(1.0));  // sample sd of {61,62,63}

    std::string table = result.table_text("net");
    CHECK(table.find("id+geo") != std::string::npos);
    std::string csv = result.csv();
    CHECK(csv.find("net,id,1,attr0,61") != std::string::npos);

    result.seeds[1].arms[0].failed = true;
    result.seeds[1].arms[0].error = "exploded";
    CHECK(result.any_failed());
    CHECK(result.arm_mean("id", "net").empty());
}
