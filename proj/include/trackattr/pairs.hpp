#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trackattr/store.hpp"

namespace trackattr {

enum class PairRule { same_track, same_frame, cross_region };

const char* to_string(PairRule r);
PairRule pair_rule_from_string(const std::string& s);

// A labeled face pair. Canonical form: a < b; label +1 iff rule is
// same_track.
struct Pair {
    std::int64_t a = 0;
    std::int64_t b = 0;
    int label = 0;  // +1 or -1
    PairRule rule = PairRule::same_track;

    friend bool operator==(const Pair&, const Pair&) = default;
};

struct MiningConfig {
    int max_pos_per_track = 10;
    double neg_to_pos_ratio = 1.0;
    double min_region_separation_km = 2.0;
    std::uint64_t seed = 1;
};

void validate_mining_config(const MiningConfig& cfg);

struct PairSet {
    std::vector<Pair> pairs;  // sorted by (a, b)
    std::size_t n_positive = 0;
    std::size_t n_negative = 0;
    std::size_t n_same_frame = 0;
    std::size_t n_cross_region = 0;

    std::size_t size() const { return pairs.size(); }
    double positive_fraction() const {
        return pairs.empty() ? 0.0 : static_cast<double>(n_positive) / pairs.size();
    }
};

// Within-track positives: uniform without-replacement sample of at most
// max_pos_per_track from each track's combinations, per-track seeded stream.
std::vector<Pair> mine_positive_pairs(const SampleStore& store, const MiningConfig& cfg);

// Negatives by rule: (i) equal frame_index, different track_id;
// (ii) different discretized region and region-centroid separation at or
// above the threshold. The union is deduplicated (same_frame wins ties),
// then down-sampled with the seeded generator to
// ceil(neg_to_pos_ratio * n_positives) when larger.
std::vector<Pair> mine_negative_pairs(const SampleStore& store, const GeoRegionSet& regions,
                                      const MiningConfig& cfg, std::size_t n_positives);

// Full training set: positives plus negatives, deduplicated on (a, b) with
// the positive label winning, sorted by (a, b).
PairSet mine_pairs(const SampleStore& store, const GeoRegionSet& regions, const MiningConfig& cfg);

void save_pairs_csv(const PairSet& pairs, const std::string& path);
PairSet load_pairs_csv(const std::string& path);

// Statistics block listing pair totals per rule.
std::string pair_stats_text(const PairSet& pairs);

}  // namespace trackattr
