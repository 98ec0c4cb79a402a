#pragma once

// Brute-force O(n^2) reference for pair mining, written straight from the
// documented rules without the production indexes (frame map, eligibility
// matrix, dedup sets). Down-sampling replays the same documented seeded
// procedure (per-track positive streams, one negative stream) so outputs are
// expected to match byte for byte.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "trackattr/geo.hpp"
#include "trackattr/pairs.hpp"
#include "trackattr/rng.hpp"
#include "trackattr/store.hpp"

namespace pairoracle {

using trackattr::GeoRegionSet;
using trackattr::MiningConfig;
using trackattr::Pair;
using trackattr::PairRule;
using trackattr::PairSet;
using trackattr::Rng;
using trackattr::SampleStore;

inline bool key_less(const Pair& x, const Pair& y) {
    return x.a != y.a ? x.a < y.a : x.b < y.b;
}

inline Pair canonical(std::int64_t s1, std::int64_t s2, int label, PairRule rule) {
    Pair p;
    p.a = std::min(s1, s2);
    p.b = std::max(s1, s2);
    p.label = label;
    p.rule = rule;
    return p;
}

inline std::vector<Pair> keep_sampled(std::vector<Pair> sorted, std::size_t limit,
                                      std::uint64_t seed) {
    if (sorted.size() <= limit) return sorted;
    Rng rng(seed);
    std::vector<std::size_t> keep = rng.sample_indices(sorted.size(), limit);
    std::vector<Pair> out;
    out.reserve(keep.size());
    for (std::size_t k : keep) out.push_back(sorted[k]);
    return out;
}

// Every unordered same-track pair, then the per-track seeded cap.
inline std::vector<Pair> positives(const SampleStore& store, const MiningConfig& cfg) {
    std::vector<Pair> out;
    const auto& samples = store.samples();
    std::vector<std::int64_t> track_ids;
    for (const auto& s : samples) track_ids.push_back(s.track_id);
    std::sort(track_ids.begin(), track_ids.end());
    track_ids.erase(std::unique(track_ids.begin(), track_ids.end()), track_ids.end());

    for (std::int64_t track : track_ids) {
        std::vector<Pair> candidates;
        for (std::size_t i = 0; i < samples.size(); ++i)
            for (std::size_t j = i + 1; j < samples.size(); ++j)
                if (samples[i].track_id == track && samples[j].track_id == track)
                    candidates.push_back(canonical(samples[i].sample_id, samples[j].sample_id, +1,
                                                   PairRule::same_track));
        std::sort(candidates.begin(), candidates.end(), key_less);
        candidates = keep_sampled(
            std::move(candidates), static_cast<std::size_t>(cfg.max_pos_per_track),
            trackattr::derive_seed(cfg.seed, "pos-track", static_cast<std::uint64_t>(track)));
        out.insert(out.end(), candidates.begin(), candidates.end());
    }
    std::sort(out.begin(), out.end(), key_less);
    return out;
}

// Union of both negative rules over all unordered pairs, same_frame winning
// the overlap, then the seeded cap at ceil(ratio * n_positives).
inline std::vector<Pair> negatives(const SampleStore& store, const GeoRegionSet& regions,
                                   const MiningConfig& cfg, std::size_t n_positives) {
    const auto& samples = store.samples();
    std::vector<Pair> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            const auto& a = samples[i];
            const auto& b = samples[j];
            bool same_frame = a.frame_index == b.frame_index && a.track_id != b.track_id;
            int ra = trackattr::discretize_geo(a.geo, regions);
            int rb = trackattr::discretize_geo(b.geo, regions);
            bool cross_region =
                ra != rb && regions.centroid_separation_km(ra, rb) >= cfg.min_region_separation_km;
            if (same_frame)
                out.push_back(canonical(a.sample_id, b.sample_id, -1, PairRule::same_frame));
            else if (cross_region)
                out.push_back(canonical(a.sample_id, b.sample_id, -1, PairRule::cross_region));
        }
    std::sort(out.begin(), out.end(), key_less);
    std::size_t target = static_cast<std::size_t>(
        std::ceil(cfg.neg_to_pos_ratio * static_cast<double>(n_positives)));
    return keep_sampled(std::move(out), target, trackattr::derive_seed(cfg.seed, "neg-sample"));
}

inline PairSet mine(const SampleStore& store, const GeoRegionSet& regions,
                    const MiningConfig& cfg) {
    std::vector<Pair> pos = positives(store, cfg);
    std::vector<Pair> neg = negatives(store, regions, cfg, pos.size());

    PairSet set;
    set.pairs = pos;
    for (const Pair& p : neg) {
        bool is_positive = false;
        for (const Pair& q : pos)
            if (q.a == p.a && q.b == p.b) is_positive = true;
        if (!is_positive) set.pairs.push_back(p);
    }
    std::sort(set.pairs.begin(), set.pairs.end(), key_less);
    for (const Pair& p : set.pairs) {
        if (p.label > 0)
            ++set.n_positive;
        else
            ++set.n_negative;
        if (p.rule == PairRule::same_frame) ++set.n_same_frame;
        if (p.rule == PairRule::cross_region) ++set.n_cross_region;
    }
    return set;
}

}  // namespace pairoracle
