#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trackattr/geo.hpp"

namespace trackattr {

enum class WeatherCondition { sunny, cloudy };

const char* to_string(WeatherCondition c);
WeatherCondition weather_condition_from_string(const std::string& s);

struct WeatherRecord {
    double temperature_c = 20.0;
    WeatherCondition condition = WeatherCondition::sunny;
};

// Class counts and the binning rule for raw context. Defaults: two weather
// classes split at 18 C, four geo regions.
struct ContextLabelSpec {
    int n_geo_classes = 4;
    int n_weather_classes = 2;
    double weather_temp_threshold_c = 18.0;
};

// Weather class 0 (sunny/hot) iff sunny and at or above the threshold,
// else class 1 (cloudy/cold).
int discretize_weather(const WeatherRecord& rec, const ContextLabelSpec& spec);

// One detected face with its provenance. Image is a row-major H*W*C array
// of values in [0, 1]; the dimensions live on the store.
struct FaceSample {
    std::int64_t sample_id = 0;
    std::vector<double> image;
    std::int64_t track_id = 0;
    std::int64_t frame_index = 0;
    GeoFix geo;
    WeatherRecord weather;
};

// All detections of one person across consecutive frames.
struct Track {
    std::int64_t track_id = 0;
    std::vector<std::size_t> sample_indices;  // into SampleStore::samples(), frame-ordered
};

// Immutable-after-load collection of face samples grouped into tracks.
// Samples are kept sorted by sample_id; that order is the canonical on-disk
// order and the row order of every derived matrix.
class SampleStore {
  public:
    SampleStore() = default;
    SampleStore(int h, int w, int c, std::vector<FaceSample> samples);

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(h_) * w_ * c_; }

    const std::vector<FaceSample>& samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }
    const FaceSample& sample(std::size_t index) const { return samples_[index]; }

    // Index of the sample with the given id; throws IntegrityError if absent.
    std::size_t index_of(std::int64_t sample_id) const;
    bool contains(std::int64_t sample_id) const;

    const std::vector<Track>& tracks() const { return tracks_; }

    // Geo class per sample under the given region set, in store order.
    std::vector<int> geo_labels(const GeoRegionSet& regions) const;
    // Weather class per sample, in store order.
    std::vector<int> weather_labels(const ContextLabelSpec& spec) const;

  private:
    void validate_and_index();

    int h_ = 0, w_ = 0, c_ = 0;
    std::vector<FaceSample> samples_;
    std::vector<Track> tracks_;
    std::map<std::int64_t, std::size_t> id_to_index_;
};

// Reads the track JSONL format: a header line {"h":H,"w":W,"c":C} followed
// by one sample object per line. Grouping into tracks and all invariant
// checks happen here.
SampleStore load_store(const std::string& path);

// Writes the canonical form: header line, then samples sorted by sample_id.
// save_store(load_store(p)) is a byte-exact fixed point.
void save_store(const SampleStore& store, const std::string& path);

}  // namespace trackattr
