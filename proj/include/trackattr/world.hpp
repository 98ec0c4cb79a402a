#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trackattr/geo.hpp"
#include "trackattr/store.hpp"

namespace trackattr {

// Knobs for the synthetic egocentric world. Every field has a desk-scale
// default; generation is a pure function of this struct.
struct WorldConfig {
    int n_identities = 200;
    int tracks_per_identity = 2;
    int samples_per_track = 6;
    GeoRegionSet regions = GeoRegionSet::default_regions();
    ContextLabelSpec label_spec;

    // P(attribute 0 agrees with its region-derived value), per identity.
    double region_attribute_bias = 0.9;
    // P(attribute 1 agrees with the track's weather class), per track.
    double weather_attribute_bias = 0.9;

    double pose_noise_sigma = 2.0;      // translation, pixels
    double lighting_noise_sigma = 0.06; // gain/offset scale

    int image_h = 16;
    int image_w = 16;
    int image_c = 1;
    int n_attributes = 8;

    // Rendering amplitudes (per-pixel RMS units).
    double identity_gain = 0.14;
    double template_gain = 0.04;
    // Attributes 0 and 1 (the context-linked ones) render at
    // template_gain * context_template_scale, so pixel evidence for them is
    // weaker than for the identity-intrinsic attributes.
    double context_template_scale = 0.25;
    // Every frame from a region carries that region's backdrop pattern, so
    // the location class is decodable from pixels.
    double region_gain = 0.1;
    // Cloud cover stamps a second backdrop pattern whose sign follows the
    // weather class.
    double weather_scene_gain = 0.05;
    // Brightness shift applied per track by weather class (+ for sunny/hot).
    double weather_lighting_offset = 0.02;

    // Frames between consecutive track windows of one identity. Track t of
    // every identity shares one frame window, so same-frame negatives exist;
    // windows of the same identity never overlap, so negatives carry no
    // label noise.
    int frame_gap = 3;

    double geo_jitter_deg = 0.02;

    std::uint64_t seed = 1;
};

void validate_world_config(const WorldConfig& cfg);

// Hidden per-person state behind the rendered samples.
struct LatentIdentity {
    int identity_id = 0;
    int region_id = 0;
    std::vector<int> attributes;         // K bits; index 1 is re-drawn per track
    std::vector<double> appearance_code; // coarse-grid pattern values
};

// sample_id -> K attribute bits.
class AttributeTruth {
  public:
    AttributeTruth() = default;
    explicit AttributeTruth(int n_attributes) : k_(n_attributes) {}

    int n_attributes() const { return k_; }
    void set(std::int64_t sample_id, std::vector<int> bits);
    const std::vector<int>& bits(std::int64_t sample_id) const;
    std::size_t size() const { return bits_.size(); }

    // Label matrix aligned to store order: row i = bits of store.sample(i).
    std::vector<std::vector<int>> aligned_labels(const SampleStore& store) const;

    void save_csv(const std::string& path) const;
    static AttributeTruth load_csv(const std::string& path);

  private:
    int k_ = 0;
    std::map<std::int64_t, std::vector<int>> bits_;
};

struct World {
    SampleStore store;
    AttributeTruth truth;
    std::vector<LatentIdentity> identities;
};

// Deterministic world generation. Every track's samples share one identity,
// one region, one weather record and one attribute vector; samples differ
// only by pose translation and lighting noise. Attribute bits enter the
// image as fixed spatial templates, so they are linearly decodable from
// pixels in the noiseless limit.
World generate_world(const WorldConfig& cfg);

// The fixed template pattern for attribute k at the given image size,
// unit per-pixel RMS before gain. Exposed for tests.
std::vector<double> attribute_template(int k, int h, int w);

struct WorldStats {
    std::size_t n_tracks = 0;
    std::size_t n_samples = 0;
    std::vector<std::size_t> per_region;
    std::vector<std::size_t> per_weather;
    std::vector<double> attribute_marginals;   // mean bit per attribute
    double attr0_region_agreement = 0.0;       // fraction matching the region-derived value
    double attr1_weather_agreement = 0.0;      // fraction matching the weather class
};

WorldStats world_stats(const SampleStore& store, const AttributeTruth& truth,
                       const GeoRegionSet& regions, const ContextLabelSpec& spec);

std::string to_text(const WorldStats& s);
std::string to_json(const WorldStats& s);

}  // namespace trackattr
