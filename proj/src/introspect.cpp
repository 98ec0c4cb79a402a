#include "trackattr/introspect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "trackattr/error.hpp"

namespace trackattr {

void validate_introspect_config(const IntrospectConfig& cfg) {
    if (cfg.top_neurons < 1) throw ConfigError("top_neurons must be >= 1");
    if (cfg.top_samples < 1) throw ConfigError("top_samples must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.layer.empty()) throw ConfigError("layer name must be non-empty");
}

ActivationMatrix layer_neuron_activations(const ParamStore& params, const ModelSpec& spec,
                                          const SampleStore& store, const std::string& layer,
                                          int batch_size) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (store.size() == 0) throw ValidationError("store is empty");
    ActivationMatrix out;
    out.n = store.size();
    for (std::size_t at = 0; at < store.size(); at += static_cast<std::size_t>(batch_size)) {
        std::size_t end = std::min(store.size(), at + static_cast<std::size_t>(batch_size));
        std::vector<std::size_t> idx(end - at);
        std::iota(idx.begin(), idx.end(), at);
        auto layers = branch_activations(spec, params, batch_images(store, idx));
        const Tensor* act = nullptr;
        std::string known;
        for (const auto& [name, tensor] : layers) {
            if (!known.empty()) known += ", ";
            known += name;
            if (name == layer) act = &tensor;
        }
        if (!act)
            throw ValidationError("unknown layer '" + layer + "' (known layers: " + known + ")");
        std::size_t rows = idx.size();
        if (act->ndim() == 2) {
            std::size_t d = static_cast<std::size_t>(act->dim(1));
            if (out.d == 0) {
                out.d = d;
                out.values.resize(out.n * out.d);
            }
            std::copy(act->data.begin(), act->data.end(),
                      out.values.begin() + static_cast<std::ptrdiff_t>(at * out.d));
        } else {
            // conv layer [N,H,W,C]: spatial mean per channel
            std::size_t c = static_cast<std::size_t>(act->dim(3));
            std::size_t hw = static_cast<std::size_t>(act->dim(1)) *
                             static_cast<std::size_t>(act->dim(2));
            if (out.d == 0) {
                out.d = c;
                out.values.resize(out.n * out.d);
            }
            for (std::size_t r = 0; r < rows; ++r) {
                double* dst = out.values.data() + (at + r) * out.d;
                std::fill(dst, dst + c, 0.0);
                const double* src = act->data.data() + r * hw * c;
                for (std::size_t p = 0; p < hw; ++p)
                    for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[p * c + ch];
                for (std::size_t ch = 0; ch < c; ++ch) dst[ch] /= static_cast<double>(hw);
            }
        }
    }
    return out;
}

std::vector<NeuronReport> top_neurons_per_class(const ParamStore& params, const ModelSpec& spec,
                                                const SampleStore& store,
                                                const std::vector<int>& class_labels,
                                                int n_classes, const IntrospectConfig& cfg) {
    validate_introspect_config(cfg);
    if (class_labels.size() != store.size())
        throw ValidationError("class labels must cover every sample");
    if (n_classes < 1) throw ValidationError("n_classes must be >= 1");
    for (int l : class_labels)
        if (l < 0 || l >= n_classes)
            throw ValidationError("class label " + std::to_string(l) + " outside [0," +
                                  std::to_string(n_classes) + ")");

    ActivationMatrix act =
        layer_neuron_activations(params, spec, store, cfg.layer, cfg.batch_size);

    // class x neuron score matrix
    std::vector<double> score(static_cast<std::size_t>(n_classes) * act.d,
                              cfg.rank_by_max ? -std::numeric_limits<double>::infinity() : 0.0);
    std::vector<std::size_t> class_count(static_cast<std::size_t>(n_classes), 0);
    for (std::size_t i = 0; i < act.n; ++i) {
        std::size_t c = static_cast<std::size_t>(class_labels[i]);
        ++class_count[c];
        const double* row = act.row(i);
        double* s = score.data() + c * act.d;
        if (cfg.rank_by_max)
            for (std::size_t j = 0; j < act.d; ++j) s[j] = std::max(s[j], row[j]);
        else
            for (std::size_t j = 0; j < act.d; ++j) s[j] += row[j];
    }
    if (!cfg.rank_by_max)
        for (int c = 0; c < n_classes; ++c)
            for (std::size_t j = 0; j < act.d; ++j)
                if (class_count[static_cast<std::size_t>(c)] > 0)
                    score[static_cast<std::size_t>(c) * act.d + j] /=
                        static_cast<double>(class_count[static_cast<std::size_t>(c)]);

    // per-class mean is reported regardless of the ranking mode
    std::vector<double> mean(static_cast<std::size_t>(n_classes) * act.d, 0.0);
    for (std::size_t i = 0; i < act.n; ++i) {
        std::size_t c = static_cast<std::size_t>(class_labels[i]);
        const double* row = act.row(i);
        for (std::size_t j = 0; j < act.d; ++j) mean[c * act.d + j] += row[j];
    }
    for (int c = 0; c < n_classes; ++c)
        if (class_count[static_cast<std::size_t>(c)] > 0)
            for (std::size_t j = 0; j < act.d; ++j)
                mean[static_cast<std::size_t>(c) * act.d + j] /=
                    static_cast<double>(class_count[static_cast<std::size_t>(c)]);

    std::vector<NeuronReport> reports;
    int n_top = std::min<int>(cfg.top_neurons, static_cast<int>(act.d));
    int k_top = std::min<int>(cfg.top_samples, static_cast<int>(act.n));
    for (int c = 0; c < n_classes; ++c) {
        std::vector<int> order(act.d);
        std::iota(order.begin(), order.end(), 0);
        const double* s = score.data() + static_cast<std::size_t>(c) * act.d;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (s[a] != s[b]) return s[a] > s[b];
            return a < b;
        });
        for (int rank = 0; rank < n_top; ++rank) {
            int neuron = order[static_cast<std::size_t>(rank)];
            NeuronReport rep;
            rep.layer = cfg.layer;
            rep.class_id = c;
            rep.rank = rank;
            rep.neuron = neuron;
            rep.class_score = s[neuron];
            rep.class_mean.resize(static_cast<std::size_t>(n_classes));
            for (int cc = 0; cc < n_classes; ++cc)
                rep.class_mean[static_cast<std::size_t>(cc)] =
                    mean[static_cast<std::size_t>(cc) * act.d + static_cast<std::size_t>(neuron)];

            std::vector<std::size_t> sample_order(act.n);
            std::iota(sample_order.begin(), sample_order.end(), std::size_t{0});
            std::sort(sample_order.begin(), sample_order.end(),
                      [&](std::size_t a, std::size_t b) {
                          double va = act.row(a)[neuron];
                          double vb = act.row(b)[neuron];
                          if (va != vb) return va > vb;
                          return store.sample(a).sample_id < store.sample(b).sample_id;
                      });
            for (int t = 0; t < k_top; ++t)
                rep.top_sample_ids.push_back(
                    store.sample(sample_order[static_cast<std::size_t>(t)]).sample_id);
            reports.push_back(std::move(rep));
        }
    }
    return reports;
}

std::string neuron_report_json(const std::vector<NeuronReport>& reports) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const NeuronReport& r : reports) {
        nlohmann::ordered_json e;
        e["layer"] = r.layer;
        e["class_id"] = r.class_id;
        e["rank"] = r.rank;
        e["neuron"] = r.neuron;
        e["class_score"] = r.class_score;
        e["class_mean"] = r.class_mean;
        e["top_sample_ids"] = r.top_sample_ids;
        j.push_back(std::move(e));
    }
    return j.dump(2);
}

void save_pgm(const SampleStore& store, std::int64_t sample_id, const std::string& path) {
    const FaceSample& s = store.sample(store.index_of(sample_id));
    int h = store.height(), w = store.width(), c = store.channels();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image: " + path);
    out << "P2\n" << w << " " << h << "\n255\n";
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double v = 0.0;
            for (int ch = 0; ch < c; ++ch)
                v += s.image[static_cast<std::size_t>((y * w + x) * c + ch)];
            v /= c;
            int g = static_cast<int>(std::lround(v * 255.0));
            out << std::clamp(g, 0, 255) << (x + 1 == w ? "" : " ");
        }
        out << "\n";
    }
    if (!out) throw IoError("failed writing image: " + path);
}

}  // namespace trackattr
