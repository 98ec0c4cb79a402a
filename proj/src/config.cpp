#include "trackattr/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "trackattr/error.hpp"
#include "trackattr/rng.hpp"

namespace trackattr {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// One parsed [section]: keys in file order, each consumed exactly once.
class Section {
  public:
    Section(std::string name, int line) : name_(std::move(name)), line_(line) {}

    const std::string& name() const { return name_; }

    void add(const std::string& key, const std::string& value, int line) {
        if (entries_.count(key) > 0) {
            throw ConfigError("duplicate key '" + key + "' in [" + name_ + "] at line " +
                              std::to_string(line));
        }
        entries_[key] = value;
    }

    bool take(const std::string& key, std::string* out) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return false;
        *out = it->second;
        used_.insert(key);
        return true;
    }

    void finish() const {
        for (const auto& [key, value] : entries_) {
            if (used_.count(key) == 0) {
                throw ConfigError("unknown key '" + key + "' in [" + name_ + "]");
            }
        }
    }

  private:
    std::string name_;
    int line_ = 0;
    std::map<std::string, std::string> entries_;
    std::set<std::string> used_;
};

std::vector<Section> parse_sections(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);

    static const std::set<std::string> known = {
        "world",         "mining",        "model", "train.pretrain", "train.context",
        "train.finetune", "eval",         "ablate", "introspect",    "run"};

    std::vector<Section> sections;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw ConfigError("malformed section header at line " + std::to_string(line_no) +
                                  ": " + line);
            }
            std::string name = trim(line.substr(1, line.size() - 2));
            if (known.count(name) == 0) {
                throw ConfigError("unknown section [" + name + "] at line " +
                                  std::to_string(line_no));
            }
            for (const Section& s : sections) {
                if (s.name() == name) {
                    throw ConfigError("section [" + name + "] appears twice (line " +
                                      std::to_string(line_no) + ")");
                }
            }
            sections.emplace_back(name, line_no);
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("expected key = value at line " + std::to_string(line_no) + ": " +
                              line);
        }
        if (sections.empty()) {
            throw ConfigError("key before any [section] at line " + std::to_string(line_no));
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key at line " + std::to_string(line_no));
        sections.back().add(key, value, line_no);
    }
    return sections;
}

Section* find_section(std::vector<Section>& sections, const std::string& name) {
    for (Section& s : sections) {
        if (s.name() == name) return &s;
    }
    return nullptr;
}

long long parse_int(const Section& sec, const std::string& key, const std::string& text) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(text, &pos);
        if (pos != text.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' in [" + sec.name() + "] is not an integer: " + text);
    }
}

double parse_double(const Section& sec, const std::string& key, const std::string& text) {
    try {
        std::size_t pos = 0;
        double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' in [" + sec.name() + "] is not a number: " + text);
    }
}

void take_int(Section& sec, const std::string& key, int* out) {
    std::string text;
    if (!sec.take(key, &text)) return;
    long long v = parse_int(sec, key, text);
    if (v < -2147483648LL || v > 2147483647LL) {
        throw ConfigError("key '" + key + "' in [" + sec.name() + "] is out of range: " + text);
    }
    *out = static_cast<int>(v);
}

void take_u64(Section& sec, const std::string& key, std::uint64_t* out) {
    std::string text;
    if (!sec.take(key, &text)) return;
    long long v = parse_int(sec, key, text);
    if (v < 0) {
        throw ConfigError("key '" + key + "' in [" + sec.name() + "] must be non-negative: " +
                          text);
    }
    *out = static_cast<std::uint64_t>(v);
}

void take_double(Section& sec, const std::string& key, double* out) {
    std::string text;
    if (!sec.take(key, &text)) return;
    *out = parse_double(sec, key, text);
}

void take_bool(Section& sec, const std::string& key, bool* out) {
    std::string text;
    if (!sec.take(key, &text)) return;
    if (text == "true") {
        *out = true;
    } else if (text == "false") {
        *out = false;
    } else {
        throw ConfigError("key '" + key + "' in [" + sec.name() +
                          "] must be true or false: " + text);
    }
}

void take_string(Section& sec, const std::string& key, std::string* out) {
    std::string text;
    if (sec.take(key, &text)) *out = text;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ',')) parts.push_back(trim(item));
    return parts;
}

void take_seed_list(Section& sec, const std::string& key, std::vector<std::uint64_t>* out) {
    std::string text;
    if (!sec.take(key, &text)) return;
    std::vector<std::uint64_t> seeds;
    for (const std::string& part : split_list(text)) {
        long long v = parse_int(sec, key, part);
        if (v < 0) {
            throw ConfigError("key '" + key + "' in [" + sec.name() +
                              "] has a negative seed: " + part);
        }
        seeds.push_back(static_cast<std::uint64_t>(v));
    }
    if (seeds.empty()) {
        throw ConfigError("key '" + key + "' in [" + sec.name() + "] must list at least one seed");
    }
    *out = seeds;
}

void take_arm_list(Section& sec, const std::string& key, std::vector<std::string>* out) {
    std::string text;
    if (!sec.take(key, &text)) return;
    std::vector<std::string> arms = split_list(text);
    for (const std::string& arm : arms) {
        bool ok = false;
        for (const std::string& name : ablation_arm_names()) ok = ok || name == arm;
        if (!ok) {
            throw ConfigError("key '" + key + "' in [" + sec.name() + "] has an unknown arm '" +
                              arm + "'");
        }
    }
    if (arms.empty()) {
        throw ConfigError("key '" + key + "' in [" + sec.name() + "] must list at least one arm");
    }
    *out = arms;
}

void read_world(Section& sec, WorldConfig* w) {
    take_int(sec, "n_identities", &w->n_identities);
    take_int(sec, "tracks_per_identity", &w->tracks_per_identity);
    take_int(sec, "samples_per_track", &w->samples_per_track);
    take_int(sec, "n_attributes", &w->n_attributes);
    take_double(sec, "region_attribute_bias", &w->region_attribute_bias);
    take_double(sec, "weather_attribute_bias", &w->weather_attribute_bias);
    take_double(sec, "pose_noise_sigma", &w->pose_noise_sigma);
    take_double(sec, "lighting_noise_sigma", &w->lighting_noise_sigma);
    take_double(sec, "identity_gain", &w->identity_gain);
    take_double(sec, "template_gain", &w->template_gain);
    take_double(sec, "context_template_scale", &w->context_template_scale);
    take_double(sec, "region_gain", &w->region_gain);
    take_double(sec, "weather_scene_gain", &w->weather_scene_gain);
    take_double(sec, "weather_lighting_offset", &w->weather_lighting_offset);
    take_int(sec, "frame_gap", &w->frame_gap);
    take_double(sec, "geo_jitter_deg", &w->geo_jitter_deg);
    take_double(sec, "weather_temp_threshold_c", &w->label_spec.weather_temp_threshold_c);
}

void read_mining(Section& sec, MiningConfig* m) {
    take_int(sec, "max_pos_per_track", &m->max_pos_per_track);
    take_double(sec, "neg_to_pos_ratio", &m->neg_to_pos_ratio);
    take_double(sec, "min_region_separation_km", &m->min_region_separation_km);
}

void read_model(Section& sec, ModelSpec* m) {
    take_int(sec, "image_h", &m->image_h);
    take_int(sec, "image_w", &m->image_w);
    take_int(sec, "image_c", &m->image_c);
    take_int(sec, "conv1_filters", &m->conv1_filters);
    take_int(sec, "conv2_filters", &m->conv2_filters);
    take_int(sec, "kernel", &m->kernel);
    take_int(sec, "dense1_units", &m->dense1_units);
    take_int(sec, "dense2_units", &m->dense2_units);
    take_int(sec, "embed_dim", &m->embed_dim);
    take_int(sec, "n_geo_classes", &m->n_geo_classes);
    take_int(sec, "n_weather_classes", &m->n_weather_classes);
}

void read_train(Section& sec, TrainConfig* t) {
    take_double(sec, "lr_global", &t->lr_global);
    take_double(sec, "lr_top_multiplier", &t->lr_top_multiplier);
    take_double(sec, "margin", &t->margin);
    take_int(sec, "batch_size", &t->batch_size);
    take_int(sec, "epochs", &t->epochs);
}

void read_eval(Section& sec, RunConfig* cfg) {
    take_double(sec, "labeled_fraction", &cfg->labeled_fraction);
    take_double(sec, "train_fraction", &cfg->train_fraction);
    take_double(sec, "svm_lambda", &cfg->svm.lambda);
    take_double(sec, "svm_lr", &cfg->svm.lr);
    take_int(sec, "svm_epochs", &cfg->svm.epochs);
    take_int(sec, "svm_batch_size", &cfg->svm.batch_size);
}

void read_ablate(Section& sec, RunConfig* cfg) {
    take_seed_list(sec, "seeds", &cfg->ablate_seeds);
    take_arm_list(sec, "arms", &cfg->ablate_arms);
}

void read_introspect(Section& sec, RunConfig* cfg) {
    take_string(sec, "layer", &cfg->introspect.layer);
    take_int(sec, "top_neurons", &cfg->introspect.top_neurons);
    take_int(sec, "top_samples", &cfg->introspect.top_samples);
    take_bool(sec, "rank_by_max", &cfg->introspect.rank_by_max);
    take_string(sec, "model", &cfg->introspect_model);
    take_bool(sec, "dump_images", &cfg->introspect_dump_images);
}

void read_run(Section& sec, RunConfig* cfg) {
    take_u64(sec, "seed", &cfg->seed);
    take_string(sec, "out", &cfg->out_dir);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void validate_run_config(const RunConfig& cfg) {
    validate_world_config(cfg.world);
    validate_mining_config(cfg.mining);
    validate_model_spec(cfg.model);
    validate_train_config(cfg.pretrain);
    validate_train_config(cfg.context);
    validate_train_config(cfg.finetune);
    validate_svm_config(cfg.svm);
    if (!(cfg.labeled_fraction > 0.0 && cfg.labeled_fraction <= 1.0)) {
        throw ConfigError("labeled_fraction must be in (0, 1]");
    }
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
        throw ConfigError("train_fraction must be in (0, 1)");
    }
    if (cfg.model.n_geo_classes != cfg.world.regions.n_regions()) {
        throw ConfigError("n_geo_classes must match the region count (" +
                          std::to_string(cfg.world.regions.n_regions()) + ")");
    }
    if (cfg.introspect_model != "geo" && cfg.introspect_model != "weather" &&
        cfg.introspect_model != "verif") {
        throw ConfigError("introspect model must be geo, weather or verif, got '" +
                          cfg.introspect_model + "'");
    }
    if (cfg.introspect.top_neurons <= 0 || cfg.introspect.top_samples <= 0) {
        throw ConfigError("introspect top_neurons and top_samples must be positive");
    }
    if (cfg.out_dir.empty()) throw ConfigError("out directory must not be empty");
}

}  // namespace

AblationConfig RunConfig::ablation() const {
    AblationConfig a;
    a.world = world;
    a.mining = mining;
    a.model = model;
    a.pretrain = pretrain;
    a.context = context;
    a.finetune = finetune;
    a.svm = svm;
    a.labeled_fraction = labeled_fraction;
    a.train_fraction = train_fraction;
    a.arms = ablate_arms;
    return a;
}

RunConfig default_run_config() { return RunConfig{}; }

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg = default_run_config();
    std::vector<Section> sections = parse_sections(path);

    if (Section* s = find_section(sections, "model")) read_model(*s, &cfg.model);
    if (Section* s = find_section(sections, "world")) read_world(*s, &cfg.world);
    if (Section* s = find_section(sections, "mining")) read_mining(*s, &cfg.mining);
    if (Section* s = find_section(sections, "train.pretrain")) read_train(*s, &cfg.pretrain);
    if (Section* s = find_section(sections, "train.context")) read_train(*s, &cfg.context);
    if (Section* s = find_section(sections, "train.finetune")) read_train(*s, &cfg.finetune);
    if (Section* s = find_section(sections, "eval")) read_eval(*s, &cfg);
    if (Section* s = find_section(sections, "ablate")) read_ablate(*s, &cfg);
    if (Section* s = find_section(sections, "introspect")) read_introspect(*s, &cfg);
    if (Section* s = find_section(sections, "run")) read_run(*s, &cfg);
    for (const Section& s : sections) s.finish();

    // The image shape and class counts live on the model section; the world
    // renders whatever the model consumes.
    cfg.world.image_h = cfg.model.image_h;
    cfg.world.image_w = cfg.model.image_w;
    cfg.world.image_c = cfg.model.image_c;
    cfg.world.label_spec.n_geo_classes = cfg.model.n_geo_classes;
    cfg.world.label_spec.n_weather_classes = cfg.model.n_weather_classes;

    validate_run_config(cfg);
    return cfg;
}

std::string resolved_text(const RunConfig& cfg) {
    std::ostringstream out;
    out << "[model]\n";
    out << "image_h = " << cfg.model.image_h << "\n";
    out << "image_w = " << cfg.model.image_w << "\n";
    out << "image_c = " << cfg.model.image_c << "\n";
    out << "conv1_filters = " << cfg.model.conv1_filters << "\n";
    out << "conv2_filters = " << cfg.model.conv2_filters << "\n";
    out << "kernel = " << cfg.model.kernel << "\n";
    out << "dense1_units = " << cfg.model.dense1_units << "\n";
    out << "dense2_units = " << cfg.model.dense2_units << "\n";
    out << "embed_dim = " << cfg.model.embed_dim << "\n";
    out << "n_geo_classes = " << cfg.model.n_geo_classes << "\n";
    out << "n_weather_classes = " << cfg.model.n_weather_classes << "\n";
    out << "\n[world]\n";
    out << "n_identities = " << cfg.world.n_identities << "\n";
    out << "tracks_per_identity = " << cfg.world.tracks_per_identity << "\n";
    out << "samples_per_track = " << cfg.world.samples_per_track << "\n";
    out << "n_attributes = " << cfg.world.n_attributes << "\n";
    out << "region_attribute_bias = " << fmt_double(cfg.world.region_attribute_bias) << "\n";
    out << "weather_attribute_bias = " << fmt_double(cfg.world.weather_attribute_bias) << "\n";
    out << "pose_noise_sigma = " << fmt_double(cfg.world.pose_noise_sigma) << "\n";
    out << "lighting_noise_sigma = " << fmt_double(cfg.world.lighting_noise_sigma) << "\n";
    out << "identity_gain = " << fmt_double(cfg.world.identity_gain) << "\n";
    out << "template_gain = " << fmt_double(cfg.world.template_gain) << "\n";
    out << "context_template_scale = " << fmt_double(cfg.world.context_template_scale) << "\n";
    out << "region_gain = " << fmt_double(cfg.world.region_gain) << "\n";
    out << "weather_scene_gain = " << fmt_double(cfg.world.weather_scene_gain) << "\n";
    out << "weather_lighting_offset = " << fmt_double(cfg.world.weather_lighting_offset) << "\n";
    out << "frame_gap = " << cfg.world.frame_gap << "\n";
    out << "geo_jitter_deg = " << fmt_double(cfg.world.geo_jitter_deg) << "\n";
    out << "weather_temp_threshold_c = " << fmt_double(cfg.world.label_spec.weather_temp_threshold_c)
        << "\n";
    out << "\n[mining]\n";
    out << "max_pos_per_track = " << cfg.mining.max_pos_per_track << "\n";
    out << "neg_to_pos_ratio = " << fmt_double(cfg.mining.neg_to_pos_ratio) << "\n";
    out << "min_region_separation_km = " << fmt_double(cfg.mining.min_region_separation_km)
        << "\n";
    const auto train_block = [&out](const char* name, const TrainConfig& t) {
        out << "\n[" << name << "]\n";
        out << "lr_global = " << fmt_double(t.lr_global) << "\n";
        out << "lr_top_multiplier = " << fmt_double(t.lr_top_multiplier) << "\n";
        out << "margin = " << fmt_double(t.margin) << "\n";
        out << "batch_size = " << t.batch_size << "\n";
        out << "epochs = " << t.epochs << "\n";
    };
    train_block("train.pretrain", cfg.pretrain);
    train_block("train.context", cfg.context);
    train_block("train.finetune", cfg.finetune);
    out << "\n[eval]\n";
    out << "labeled_fraction = " << fmt_double(cfg.labeled_fraction) << "\n";
    out << "train_fraction = " << fmt_double(cfg.train_fraction) << "\n";
    out << "svm_lambda = " << fmt_double(cfg.svm.lambda) << "\n";
    out << "svm_lr = " << fmt_double(cfg.svm.lr) << "\n";
    out << "svm_epochs = " << cfg.svm.epochs << "\n";
    out << "svm_batch_size = " << cfg.svm.batch_size << "\n";
    out << "\n[ablate]\n";
    out << "seeds = ";
    for (std::size_t i = 0; i < cfg.ablate_seeds.size(); ++i) {
        if (i > 0) out << ", ";
        out << cfg.ablate_seeds[i];
    }
    out << "\n";
    out << "arms = ";
    for (std::size_t i = 0; i < cfg.ablate_arms.size(); ++i) {
        if (i > 0) out << ", ";
        out << cfg.ablate_arms[i];
    }
    out << "\n";
    out << "\n[introspect]\n";
    out << "layer = " << cfg.introspect.layer << "\n";
    out << "top_neurons = " << cfg.introspect.top_neurons << "\n";
    out << "top_samples = " << cfg.introspect.top_samples << "\n";
    out << "rank_by_max = " << (cfg.introspect.rank_by_max ? "true" : "false") << "\n";
    out << "model = " << cfg.introspect_model << "\n";
    out << "dump_images = " << (cfg.introspect_dump_images ? "true" : "false") << "\n";
    out << "\n[run]\n";
    out << "seed = " << cfg.seed << "\n";
    out << "out = " << cfg.out_dir << "\n";
    return out.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
    std::string text = resolved_text(cfg);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace trackattr
