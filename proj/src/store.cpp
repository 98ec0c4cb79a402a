#include "trackattr/store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "trackattr/error.hpp"

namespace trackattr {

const char* to_string(WeatherCondition c) {
    return c == WeatherCondition::sunny ? "sunny" : "cloudy";
}

WeatherCondition weather_condition_from_string(const std::string& s) {
    if (s == "sunny") return WeatherCondition::sunny;
    if (s == "cloudy") return WeatherCondition::cloudy;
    throw ValidationError("unknown weather condition: '" + s + "' (expected sunny or cloudy)");
}

int discretize_weather(const WeatherRecord& rec, const ContextLabelSpec& spec) {
    return (rec.condition == WeatherCondition::sunny &&
            rec.temperature_c >= spec.weather_temp_threshold_c)
               ? 0
               : 1;
}

namespace {

void validate_weather(const WeatherRecord& w) {
    if (!(std::isfinite(w.temperature_c) && w.temperature_c >= -50.0 && w.temperature_c <= 60.0))
        throw ValidationError("temperature out of range [-50, 60] C: " +
                              std::to_string(w.temperature_c));
}

}  // namespace

SampleStore::SampleStore(int h, int w, int c, std::vector<FaceSample> samples)
    : h_(h), w_(w), c_(c), samples_(std::move(samples)) {
    validate_and_index();
}

void SampleStore::validate_and_index() {
    if (h_ < 0 || w_ < 0 || c_ < 0 || (size() > 0 && (h_ == 0 || w_ == 0 || c_ == 0)))
        throw ValidationError("store image dimensions must be positive");

    std::sort(samples_.begin(), samples_.end(),
              [](const FaceSample& a, const FaceSample& b) { return a.sample_id < b.sample_id; });

    const std::size_t n_pixels = pixel_count();
    std::set<std::pair<std::int64_t, std::int64_t>> track_frame_seen;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const FaceSample& s = samples_[i];
        if (i > 0 && samples_[i - 1].sample_id == s.sample_id)
            throw IntegrityError("duplicate sample_id " + std::to_string(s.sample_id));
        if (s.image.size() != n_pixels)
            throw ValidationError("sample " + std::to_string(s.sample_id) + " has " +
                                  std::to_string(s.image.size()) + " pixels, store expects " +
                                  std::to_string(n_pixels));
        for (double v : s.image)
            if (!(std::isfinite(v) && v >= 0.0 && v <= 1.0))
                throw ValidationError("sample " + std::to_string(s.sample_id) +
                                      " has pixel value outside [0, 1]");
        validate_geo_fix(s.geo);
        validate_weather(s.weather);
        if (!track_frame_seen.insert({s.track_id, s.frame_index}).second)
            throw IntegrityError("duplicate detection in track " + std::to_string(s.track_id) +
                                 " at frame " + std::to_string(s.frame_index));
        id_to_index_[s.sample_id] = i;
    }

    // Group into tracks, frame-ordered.
    std::map<std::int64_t, std::vector<std::size_t>> by_track;
    for (std::size_t i = 0; i < samples_.size(); ++i) by_track[samples_[i].track_id].push_back(i);
    tracks_.clear();
    for (auto& [tid, idxs] : by_track) {
        std::sort(idxs.begin(), idxs.end(), [this](std::size_t a, std::size_t b) {
            return samples_[a].frame_index < samples_[b].frame_index;
        });
        tracks_.push_back(Track{tid, std::move(idxs)});
    }
}

std::size_t SampleStore::index_of(std::int64_t sample_id) const {
    auto it = id_to_index_.find(sample_id);
    if (it == id_to_index_.end())
        throw IntegrityError("unknown sample_id " + std::to_string(sample_id));
    return it->second;
}

bool SampleStore::contains(std::int64_t sample_id) const {
    return id_to_index_.count(sample_id) > 0;
}

std::vector<int> SampleStore::geo_labels(const GeoRegionSet& regions) const {
    std::vector<int> labels(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i)
        labels[i] = discretize_geo(samples_[i].geo, regions);
    return labels;
}

std::vector<int> SampleStore::weather_labels(const ContextLabelSpec& spec) const {
    std::vector<int> labels(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i)
        labels[i] = discretize_weather(samples_[i].weather, spec);
    return labels;
}

SampleStore load_store(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open track file: " + path);

    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) {
        // Empty file: empty store with zero-size images.
        return SampleStore(0, 0, 0, {});
    }
    ++line_no;

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad header: ") + e.what(), line_no);
    }
    if (!header.contains("h") || !header.contains("w") || !header.contains("c"))
        throw ParseError("header line must declare h, w, c", line_no);
    int h = header.at("h").get<int>();
    int w = header.at("w").get<int>();
    int c = header.at("c").get<int>();

    std::vector<FaceSample> samples;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad sample record: ") + e.what(), line_no);
        }
        FaceSample s;
        try {
            s.sample_id = j.at("sample_id").get<std::int64_t>();
            s.track_id = j.at("track_id").get<std::int64_t>();
            s.frame_index = j.at("frame_index").get<std::int64_t>();
            s.geo.lat = j.at("lat").get<double>();
            s.geo.lon = j.at("lon").get<double>();
            s.weather.temperature_c = j.at("temp_c").get<double>();
            s.weather.condition = weather_condition_from_string(j.at("condition").get<std::string>());
            s.image = j.at("image").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad sample record: ") + e.what(), line_no);
        }
        samples.push_back(std::move(s));
    }
    return SampleStore(h, w, c, std::move(samples));
}

void save_store(const SampleStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write track file: " + path);
    nlohmann::ordered_json header;
    header["h"] = store.height();
    header["w"] = store.width();
    header["c"] = store.channels();
    out << header.dump() << '\n';
    for (const FaceSample& s : store.samples()) {
        nlohmann::ordered_json j;
        j["sample_id"] = s.sample_id;
        j["track_id"] = s.track_id;
        j["frame_index"] = s.frame_index;
        j["lat"] = s.geo.lat;
        j["lon"] = s.geo.lon;
        j["temp_c"] = s.weather.temperature_c;
        j["condition"] = to_string(s.weather.condition);
        j["image"] = s.image;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing track file: " + path);
}

}  // namespace trackattr
