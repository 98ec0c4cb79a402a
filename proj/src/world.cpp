#include "trackattr/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "trackattr/error.hpp"
#include "trackattr/rng.hpp"

namespace trackattr {

namespace {

constexpr int kCoarseGrid = 4;  // patterns live on a 4x4 grid, upsampled bilinearly
constexpr std::uint64_t kTemplateSeed = 0x7a11f0c3d5e9b217ULL;

// Bilinear evaluation of a coarse grid at continuous image coordinates,
// edges replicated. Linear in the grid values.
double eval_grid(const std::vector<double>& grid, double y, double x, int h, int w) {
    double gy = (h > 1) ? y / (h - 1) * (kCoarseGrid - 1) : 0.0;
    double gx = (w > 1) ? x / (w - 1) * (kCoarseGrid - 1) : 0.0;
    gy = std::clamp(gy, 0.0, double(kCoarseGrid - 1));
    gx = std::clamp(gx, 0.0, double(kCoarseGrid - 1));
    int y0 = static_cast<int>(gy);
    int x0 = static_cast<int>(gx);
    int y1 = std::min(y0 + 1, kCoarseGrid - 1);
    int x1 = std::min(x0 + 1, kCoarseGrid - 1);
    double fy = gy - y0;
    double fx = gx - x0;
    double v00 = grid[y0 * kCoarseGrid + x0];
    double v01 = grid[y0 * kCoarseGrid + x1];
    double v10 = grid[y1 * kCoarseGrid + x0];
    double v11 = grid[y1 * kCoarseGrid + x1];
    return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
}

// Scales a coarse grid so its unshifted upsampled image has unit per-pixel RMS.
void normalize_grid(std::vector<double>& grid, int h, int w) {
    double sum_sq = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = eval_grid(grid, y, x, h, w);
            sum_sq += v * v;
        }
    double rms = std::sqrt(sum_sq / (double(h) * w));
    if (rms > 0)
        for (double& v : grid) v /= rms;
}

std::vector<double> random_grid(Rng& rng) {
    std::vector<double> grid(kCoarseGrid * kCoarseGrid);
    for (double& v : grid) v = rng.normal();
    return grid;
}

}  // namespace

void validate_world_config(const WorldConfig& cfg) {
    if (cfg.n_identities < 1 || cfg.tracks_per_identity < 1 || cfg.samples_per_track < 1)
        throw ConfigError("world counts must be >= 1");
    if (cfg.pose_noise_sigma < 0 || cfg.lighting_noise_sigma < 0)
        throw ConfigError("noise sigmas must be >= 0");
    if (cfg.identity_gain < 0 || cfg.template_gain < 0 || cfg.context_template_scale < 0 ||
        cfg.region_gain < 0 || cfg.weather_scene_gain < 0 || cfg.weather_lighting_offset < 0)
        throw ConfigError("rendering gains must be >= 0");
    if (cfg.region_attribute_bias < 0.5 || cfg.region_attribute_bias > 1.0 ||
        cfg.weather_attribute_bias < 0.5 || cfg.weather_attribute_bias > 1.0)
        throw ConfigError("attribute biases must lie in [0.5, 1]");
    if (cfg.image_h < 1 || cfg.image_w < 1 || cfg.image_c < 1)
        throw ConfigError("image dimensions must be >= 1");
    if (cfg.n_attributes < 2)
        throw ConfigError("need at least 2 attributes (indices 0 and 1 are context-linked)");
    // Templates span a 4x4 coarse basis; more attributes than basis vectors
    // (or an image smaller than the basis) cannot host independent templates.
    if (cfg.image_h < 2 * kCoarseGrid || cfg.image_w < 2 * kCoarseGrid)
        throw ConfigError("image too small to host attribute templates (need >= 8x8)");
    if (cfg.n_attributes > kCoarseGrid * kCoarseGrid)
        throw ConfigError("image too small to host " + std::to_string(cfg.n_attributes) +
                          " attribute templates (max 16)");
    if (cfg.frame_gap < 0) throw ConfigError("frame_gap must be >= 0");
    if (cfg.regions.n_regions() < 2) throw ConfigError("world needs >= 2 regions");
}

std::vector<double> attribute_template(int k, int h, int w) {
    Rng rng(derive_seed(kTemplateSeed, "attr-template", static_cast<std::uint64_t>(k)));
    std::vector<double> grid = random_grid(rng);
    normalize_grid(grid, h, w);
    std::vector<double> img(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img[y * w + x] = eval_grid(grid, y, x, h, w);
    return img;
}

void AttributeTruth::set(std::int64_t sample_id, std::vector<int> bits) {
    if (static_cast<int>(bits.size()) != k_)
        throw ValidationError("attribute vector length mismatch for sample " +
                              std::to_string(sample_id));
    bits_[sample_id] = std::move(bits);
}

const std::vector<int>& AttributeTruth::bits(std::int64_t sample_id) const {
    auto it = bits_.find(sample_id);
    if (it == bits_.end())
        throw IntegrityError("no attribute truth for sample " + std::to_string(sample_id));
    return it->second;
}

std::vector<std::vector<int>> AttributeTruth::aligned_labels(const SampleStore& store) const {
    std::vector<std::vector<int>> rows;
    rows.reserve(store.size());
    for (const FaceSample& s : store.samples()) rows.push_back(bits(s.sample_id));
    return rows;
}

void AttributeTruth::save_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write truth file: " + path);
    out << "sample_id";
    for (int k = 0; k < k_; ++k) out << ",attr" << k;
    out << '\n';
    for (const auto& [sid, bits] : bits_) {
        out << sid;
        for (int b : bits) out << ',' << b;
        out << '\n';
    }
    if (!out) throw IoError("failed writing truth file: " + path);
}

AttributeTruth AttributeTruth::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open truth file: " + path);
    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw ParseError("truth file is empty: " + path, 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream hs(line);
    std::string col;
    int k = -1;  // first column is sample_id
    while (std::getline(hs, col, ',')) ++k;
    if (k < 1) throw ParseError("truth header needs sample_id plus attribute columns", line_no);
    AttributeTruth truth(k);
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        if (!std::getline(ss, field, ',')) throw ParseError("bad truth row", line_no);
        std::int64_t sid;
        std::vector<int> bits;
        try {
            sid = std::stoll(field);
            while (std::getline(ss, field, ',')) bits.push_back(std::stoi(field));
        } catch (const std::exception&) {
            throw ParseError("bad numeric field in truth row", line_no);
        }
        if (static_cast<int>(bits.size()) != k)
            throw ParseError("truth row has wrong number of attribute bits", line_no);
        truth.set(sid, std::move(bits));
    }
    return truth;
}

World generate_world(const WorldConfig& cfg) {
    validate_world_config(cfg);

    const int h = cfg.image_h, w = cfg.image_w, c = cfg.image_c;
    const int n_regions = cfg.regions.n_regions();
    const int K = cfg.n_attributes;
    const int S = cfg.samples_per_track;
    const int T = cfg.tracks_per_identity;

    // Fixed templates, already unit-RMS; fold the per-attribute gain in here.
    std::vector<std::vector<double>> template_grids(K);
    std::vector<double> template_gain(K);
    for (int k = 0; k < K; ++k) {
        Rng trng(derive_seed(kTemplateSeed, "attr-template", static_cast<std::uint64_t>(k)));
        template_grids[k] = random_grid(trng);
        normalize_grid(template_grids[k], h, w);
        template_gain[k] = cfg.template_gain * (k < 2 ? cfg.context_template_scale : 1.0);
    }
    std::vector<std::vector<double>> region_grids(static_cast<std::size_t>(n_regions));
    for (int r = 0; r < n_regions; ++r) {
        Rng rrng(derive_seed(kTemplateSeed, "region-template", static_cast<std::uint64_t>(r)));
        region_grids[static_cast<std::size_t>(r)] = random_grid(rrng);
        normalize_grid(region_grids[static_cast<std::size_t>(r)], h, w);
    }
    Rng wrng(derive_seed(kTemplateSeed, "weather-template"));
    std::vector<double> weather_grid = random_grid(wrng);
    normalize_grid(weather_grid, h, w);

    World world;
    world.truth = AttributeTruth(K);
    std::vector<FaceSample> samples;
    samples.reserve(static_cast<std::size_t>(cfg.n_identities) * T * S);

    for (int i = 0; i < cfg.n_identities; ++i) {
        Rng id_rng(derive_seed(cfg.seed, "identity", static_cast<std::uint64_t>(i)));
        LatentIdentity ident;
        ident.identity_id = i;
        ident.region_id = i % n_regions;  // balanced region assignment
        ident.appearance_code = random_grid(id_rng);
        normalize_grid(ident.appearance_code, h, w);

        ident.attributes.assign(K, 0);
        int region_value = ident.region_id % 2;
        ident.attributes[0] =
            id_rng.bernoulli(cfg.region_attribute_bias) ? region_value : 1 - region_value;
        ident.attributes[1] = 0;  // drawn per track below
        for (int k = 2; k < K; ++k) ident.attributes[k] = id_rng.bernoulli(0.5) ? 1 : 0;

        for (int t = 0; t < T; ++t) {
            std::int64_t track_id = static_cast<std::int64_t>(i) * T + t;
            Rng track_rng(derive_seed(cfg.seed, "track", static_cast<std::uint64_t>(track_id)));

            WeatherRecord weather;
            weather.condition =
                track_rng.bernoulli(0.5) ? WeatherCondition::sunny : WeatherCondition::cloudy;
            double mean_temp = weather.condition == WeatherCondition::sunny ? 25.0 : 10.0;
            weather.temperature_c = std::clamp(track_rng.normal(mean_temp, 5.0), -50.0, 60.0);
            int weather_class = discretize_weather(weather, cfg.label_spec);

            std::vector<int> bits = ident.attributes;
            int weather_value = weather_class == 0 ? 1 : 0;
            bits[1] = track_rng.bernoulli(cfg.weather_attribute_bias) ? weather_value
                                                                      : 1 - weather_value;

            double weather_sign = weather_class == 0 ? 1.0 : -1.0;

            // Combined coarse pattern for this track (linear in the grids).
            // The backdrop layers (region, weather) share the frame with the
            // face, and the per-sample translation below models camera
            // jitter, so the whole scene shifts rigidly.
            std::vector<double> grid(kCoarseGrid * kCoarseGrid, 0.0);
            for (int g = 0; g < kCoarseGrid * kCoarseGrid; ++g) {
                double v = cfg.identity_gain * ident.appearance_code[g];
                v += cfg.region_gain * region_grids[static_cast<std::size_t>(ident.region_id)][g];
                v += weather_sign * cfg.weather_scene_gain * weather_grid[g];
                for (int k = 0; k < K; ++k)
                    if (bits[k]) v += template_gain[k] * template_grids[k][g];
                grid[g] = v;
            }
            double weather_offset = weather_sign * cfg.weather_lighting_offset;

            for (int s = 0; s < S; ++s) {
                std::int64_t sample_id = track_id * S + s;
                Rng srng(derive_seed(cfg.seed, "sample", static_cast<std::uint64_t>(sample_id)));

                double dy = srng.normal(0.0, cfg.pose_noise_sigma);
                double dx = srng.normal(0.0, cfg.pose_noise_sigma);
                double gain = 1.0 + srng.normal(0.0, cfg.lighting_noise_sigma);
                double offset = srng.normal(0.0, cfg.lighting_noise_sigma);

                FaceSample fs;
                fs.sample_id = sample_id;
                fs.track_id = track_id;
                fs.frame_index = static_cast<std::int64_t>(t) * (S + cfg.frame_gap) + s;
                fs.weather = weather;
                fs.geo.lat = std::clamp(cfg.regions.region(ident.region_id).centroid.lat +
                                            srng.normal(0.0, cfg.geo_jitter_deg),
                                        -90.0, 90.0);
                fs.geo.lon = std::clamp(cfg.regions.region(ident.region_id).centroid.lon +
                                            srng.normal(0.0, cfg.geo_jitter_deg),
                                        -180.0, 180.0);

                fs.image.resize(static_cast<std::size_t>(h) * w * c);
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        double p = eval_grid(grid, y - dy, x - dx, h, w);
                        double v = std::clamp(0.5 + gain * p + offset + weather_offset, 0.0, 1.0);
                        for (int ch = 0; ch < c; ++ch)
                            fs.image[(static_cast<std::size_t>(y) * w + x) * c + ch] = v;
                    }

                world.truth.set(sample_id, bits);
                samples.push_back(std::move(fs));
            }
        }
        world.identities.push_back(std::move(ident));
    }

    world.store = SampleStore(h, w, c, std::move(samples));
    return world;
}

WorldStats world_stats(const SampleStore& store, const AttributeTruth& truth,
                       const GeoRegionSet& regions, const ContextLabelSpec& spec) {
    WorldStats st;
    st.n_tracks = store.tracks().size();
    st.n_samples = store.size();
    st.per_region.assign(static_cast<std::size_t>(regions.n_regions()), 0);
    st.per_weather.assign(2, 0);
    st.attribute_marginals.assign(static_cast<std::size_t>(truth.n_attributes()), 0.0);
    if (store.empty()) return st;

    std::size_t agree0 = 0, agree1 = 0;
    for (const FaceSample& s : store.samples()) {
        int region = discretize_geo(s.geo, regions);
        int weather = discretize_weather(s.weather, spec);
        st.per_region[static_cast<std::size_t>(region)]++;
        st.per_weather[static_cast<std::size_t>(weather)]++;
        const std::vector<int>& bits = truth.bits(s.sample_id);
        for (std::size_t k = 0; k < bits.size(); ++k) st.attribute_marginals[k] += bits[k];
        if (!bits.empty() && bits[0] == region % 2) ++agree0;
        if (bits.size() > 1 && bits[1] == (weather == 0 ? 1 : 0)) ++agree1;
    }
    for (double& m : st.attribute_marginals) m /= static_cast<double>(st.n_samples);
    st.attr0_region_agreement = static_cast<double>(agree0) / static_cast<double>(st.n_samples);
    st.attr1_weather_agreement = static_cast<double>(agree1) / static_cast<double>(st.n_samples);
    return st;
}

std::string to_text(const WorldStats& s) {
    std::ostringstream out;
    out << "tracks:  " << s.n_tracks << "\n";
    out << "samples: " << s.n_samples << "\n";
    out << "per-region counts:";
    for (std::size_t i = 0; i < s.per_region.size(); ++i) out << ' ' << i << '=' << s.per_region[i];
    out << "\nper-weather counts:";
    for (std::size_t i = 0; i < s.per_weather.size(); ++i)
        out << ' ' << i << '=' << s.per_weather[i];
    out << "\nattribute marginals:";
    out.precision(3);
    for (std::size_t k = 0; k < s.attribute_marginals.size(); ++k)
        out << ' ' << 'a' << k << '=' << s.attribute_marginals[k];
    out << "\nattr0/region agreement:  " << s.attr0_region_agreement;
    out << "\nattr1/weather agreement: " << s.attr1_weather_agreement << "\n";
    return out.str();
}

std::string to_json(const WorldStats& s) {
    nlohmann::ordered_json j;
    j["tracks"] = s.n_tracks;
    j["samples"] = s.n_samples;
    j["per_region"] = s.per_region;
    j["per_weather"] = s.per_weather;
    j["attribute_marginals"] = s.attribute_marginals;
    j["attr0_region_agreement"] = s.attr0_region_agreement;
    j["attr1_weather_agreement"] = s.attr1_weather_agreement;
    return j.dump(2);
}

}  // namespace trackattr
