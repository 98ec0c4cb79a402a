#pragma once

// Shared fixtures for the test suites: tiny hand-built stores plus a
// randomized store generator for differential tests against brute-force
// oracles.

#include <cstdint>
#include <string>
#include <vector>

#include "trackattr/geo.hpp"
#include "trackattr/rng.hpp"
#include "trackattr/store.hpp"

namespace testsupport {

using trackattr::FaceSample;
using trackattr::GeoFix;
using trackattr::GeoRegion;
using trackattr::GeoRegionSet;
using trackattr::Rng;
using trackattr::SampleStore;
using trackattr::WeatherCondition;
using trackattr::WeatherRecord;

inline FaceSample make_sample(std::int64_t sample_id, std::int64_t track_id,
                              std::int64_t frame_index, GeoFix geo, double temp_c,
                              WeatherCondition cond, int h = 2, int w = 2, int c = 1,
                              double fill = 0.5) {
    FaceSample s;
    s.sample_id = sample_id;
    s.track_id = track_id;
    s.frame_index = frame_index;
    s.geo = geo;
    s.weather.temperature_c = temp_c;
    s.weather.condition = cond;
    s.image.assign(static_cast<std::size_t>(h) * w * c, fill);
    return s;
}

// Four regions roughly 300 km apart plus two that are only ~1 km apart, so
// the cross-region separation threshold has something to reject.
inline GeoRegionSet test_regions() {
    std::vector<GeoRegion> regions;
    regions.push_back({0, "north", {48.0, 2.0}});
    regions.push_back({1, "south", {44.0, 2.0}});
    regions.push_back({2, "east", {46.0, 6.0}});
    regions.push_back({3, "east-annex", {46.0, 6.013}});
    return GeoRegionSet(std::move(regions));
}

// Random store of at most max_samples samples: random track sizes, frame
// collisions on purpose (small frame range), geo fixes scattered near the
// test region centroids, mixed weather.
inline SampleStore random_store(Rng& rng, std::size_t max_samples = 50) {
    GeoRegionSet regions = test_regions();
    std::size_t n = 2 + rng.uniform_index(max_samples - 1);
    std::vector<FaceSample> samples;
    std::int64_t track_id = -1;
    std::size_t track_left = 0;
    std::int64_t frame = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (track_left == 0) {
            ++track_id;
            track_left = 1 + rng.uniform_index(8);
            frame = static_cast<std::int64_t>(rng.uniform_index(6));
        }
        const GeoRegion& base =
            regions.region(static_cast<int>(rng.uniform_index(regions.n_regions())));
        GeoFix fix{base.centroid.lat + rng.uniform(-0.05, 0.05),
                   base.centroid.lon + rng.uniform(-0.05, 0.05)};
        double temp = rng.uniform(5.0, 30.0);
        WeatherCondition cond =
            rng.bernoulli(0.5) ? WeatherCondition::sunny : WeatherCondition::cloudy;
        samples.push_back(make_sample(static_cast<std::int64_t>(i), track_id, frame, fix, temp,
                                      cond));
        --track_left;
        ++frame;
    }
    return SampleStore(2, 2, 1, std::move(samples));
}

inline std::string temp_path(const std::string& name) {
    return std::string("/tmp/trackattr-test-") + name;
}

}  // namespace testsupport
