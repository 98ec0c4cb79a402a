#include "trackattr/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "trackattr/error.hpp"
#include "trackattr/rng.hpp"

namespace trackattr {

const char* to_string(PairRule r) {
    switch (r) {
        case PairRule::same_track: return "same_track";
        case PairRule::same_frame: return "same_frame";
        case PairRule::cross_region: return "cross_region";
    }
    return "?";
}

PairRule pair_rule_from_string(const std::string& s) {
    if (s == "same_track") return PairRule::same_track;
    if (s == "same_frame") return PairRule::same_frame;
    if (s == "cross_region") return PairRule::cross_region;
    throw ValidationError("unknown pair rule: '" + s + "'");
}

void validate_mining_config(const MiningConfig& cfg) {
    if (cfg.max_pos_per_track < 1) throw ConfigError("max_pos_per_track must be >= 1");
    if (!(cfg.neg_to_pos_ratio > 0)) throw ConfigError("neg_to_pos_ratio must be > 0");
    if (cfg.min_region_separation_km < 0)
        throw ConfigError("min_region_separation_km must be >= 0");
}

namespace {

bool pair_key_less(const Pair& x, const Pair& y) {
    return x.a != y.a ? x.a < y.a : x.b < y.b;
}

Pair make_pair(std::int64_t s1, std::int64_t s2, int label, PairRule rule) {
    Pair p;
    p.a = std::min(s1, s2);
    p.b = std::max(s1, s2);
    p.label = label;
    p.rule = rule;
    return p;
}

}  // namespace

std::vector<Pair> mine_positive_pairs(const SampleStore& store, const MiningConfig& cfg) {
    validate_mining_config(cfg);
    std::vector<Pair> out;
    for (const Track& track : store.tracks()) {
        const auto& idxs = track.sample_indices;
        std::vector<Pair> candidates;
        for (std::size_t i = 0; i < idxs.size(); ++i)
            for (std::size_t j = i + 1; j < idxs.size(); ++j)
                candidates.push_back(make_pair(store.sample(idxs[i]).sample_id,
                                               store.sample(idxs[j]).sample_id, +1,
                                               PairRule::same_track));
        std::sort(candidates.begin(), candidates.end(), pair_key_less);
        if (candidates.size() > static_cast<std::size_t>(cfg.max_pos_per_track)) {
            Rng rng(derive_seed(cfg.seed, "pos-track", static_cast<std::uint64_t>(track.track_id)));
            std::vector<std::size_t> keep = rng.sample_indices(
                candidates.size(), static_cast<std::size_t>(cfg.max_pos_per_track));
            std::vector<Pair> selected;
            selected.reserve(keep.size());
            for (std::size_t k : keep) selected.push_back(candidates[k]);
            candidates = std::move(selected);
        }
        out.insert(out.end(), candidates.begin(), candidates.end());
    }
    std::sort(out.begin(), out.end(), pair_key_less);
    return out;
}

std::vector<Pair> mine_negative_pairs(const SampleStore& store, const GeoRegionSet& regions,
                                      const MiningConfig& cfg, std::size_t n_positives) {
    validate_mining_config(cfg);
    const auto& samples = store.samples();
    const std::size_t n = samples.size();

    // Rule (i): equal frame_index, different track_id. One ingest file is one
    // recording session, so all samples in the store are in scope.
    std::vector<Pair> same_frame;
    std::map<std::int64_t, std::vector<std::size_t>> by_frame;
    for (std::size_t i = 0; i < n; ++i) by_frame[samples[i].frame_index].push_back(i);
    for (const auto& [frame, group] : by_frame) {
        for (std::size_t i = 0; i < group.size(); ++i)
            for (std::size_t j = i + 1; j < group.size(); ++j) {
                const FaceSample& a = samples[group[i]];
                const FaceSample& b = samples[group[j]];
                if (a.track_id != b.track_id)
                    same_frame.push_back(
                        make_pair(a.sample_id, b.sample_id, -1, PairRule::same_frame));
            }
    }

    // Rule (ii): different discretized regions whose centroids are at least
    // min_region_separation_km apart.
    std::vector<int> region = store.geo_labels(regions);
    const int n_regions = regions.n_regions();
    std::vector<char> eligible(static_cast<std::size_t>(n_regions) * n_regions, 0);
    for (int r1 = 0; r1 < n_regions; ++r1)
        for (int r2 = 0; r2 < n_regions; ++r2)
            eligible[static_cast<std::size_t>(r1) * n_regions + r2] =
                (r1 != r2 &&
                 regions.centroid_separation_km(r1, r2) >= cfg.min_region_separation_km)
                    ? 1
                    : 0;

    std::set<std::pair<std::int64_t, std::int64_t>> same_frame_keys;
    for (const Pair& p : same_frame) same_frame_keys.insert({p.a, p.b});

    std::vector<Pair> combined = same_frame;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!eligible[static_cast<std::size_t>(region[i]) * n_regions + region[j]]) continue;
            Pair p = make_pair(samples[i].sample_id, samples[j].sample_id, -1,
                               PairRule::cross_region);
            if (same_frame_keys.count({p.a, p.b})) continue;  // same_frame wins the tie
            combined.push_back(p);
        }

    std::sort(combined.begin(), combined.end(), pair_key_less);

    std::size_t target = static_cast<std::size_t>(
        std::ceil(cfg.neg_to_pos_ratio * static_cast<double>(n_positives)));
    if (combined.size() > target) {
        Rng rng(derive_seed(cfg.seed, "neg-sample"));
        std::vector<std::size_t> keep = rng.sample_indices(combined.size(), target);
        std::vector<Pair> selected;
        selected.reserve(keep.size());
        for (std::size_t k : keep) selected.push_back(combined[k]);
        combined = std::move(selected);
    }
    return combined;
}

PairSet mine_pairs(const SampleStore& store, const GeoRegionSet& regions,
                   const MiningConfig& cfg) {
    std::vector<Pair> pos = mine_positive_pairs(store, cfg);
    std::vector<Pair> neg = mine_negative_pairs(store, regions, cfg, pos.size());

    std::set<std::pair<std::int64_t, std::int64_t>> pos_keys;
    for (const Pair& p : pos) pos_keys.insert({p.a, p.b});

    PairSet set;
    set.pairs = std::move(pos);
    for (const Pair& p : neg) {
        if (pos_keys.count({p.a, p.b})) continue;  // positive wins conflicts
        set.pairs.push_back(p);
    }
    std::sort(set.pairs.begin(), set.pairs.end(), pair_key_less);

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

void save_pairs_csv(const PairSet& pairs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write pairs file: " + path);
    out << "a,b,label,rule\n";
    for (const Pair& p : pairs.pairs)
        out << p.a << ',' << p.b << ',' << p.label << ',' << to_string(p.rule) << '\n';
    if (!out) throw IoError("failed writing pairs file: " + path);
}

PairSet load_pairs_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pairs file: " + path);
    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw ParseError("pairs file is empty: " + path, 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "a,b,label,rule") throw ParseError("pairs file header must be 'a,b,label,rule'", 1);
    PairSet set;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string a_s, b_s, label_s, rule_s;
        if (!std::getline(ss, a_s, ',') || !std::getline(ss, b_s, ',') ||
            !std::getline(ss, label_s, ',') || !std::getline(ss, rule_s))
            throw ParseError("pair row needs 4 comma-separated fields", line_no);
        Pair p;
        try {
            p.a = std::stoll(a_s);
            p.b = std::stoll(b_s);
            p.label = std::stoi(label_s);
        } catch (const std::exception&) {
            throw ParseError("bad numeric field in pair row", line_no);
        }
        p.rule = pair_rule_from_string(rule_s);
        if (p.a >= p.b) throw ParseError("pair must satisfy a < b", line_no);
        if (p.label != +1 && p.label != -1) throw ParseError("pair label must be +1 or -1", line_no);
        if ((p.label == +1) != (p.rule == PairRule::same_track))
            throw ParseError("label +1 iff rule same_track", line_no);
        if (p.label > 0)
            ++set.n_positive;
        else
            ++set.n_negative;
        if (p.rule == PairRule::same_frame) ++set.n_same_frame;
        if (p.rule == PairRule::cross_region) ++set.n_cross_region;
        set.pairs.push_back(p);
    }
    return set;
}

std::string pair_stats_text(const PairSet& pairs) {
    std::ostringstream out;
    out << "generated face pairs: " << pairs.size() << "\n";
    out << "  positive (same_track):   " << pairs.n_positive << "\n";
    out << "  negative (same_frame):   " << pairs.n_same_frame << "\n";
    out << "  negative (cross_region): " << pairs.n_cross_region << "\n";
    out.precision(4);
    out << "  positive fraction:       " << pairs.positive_fraction() << "\n";
    return out.str();
}

}  // namespace trackattr
