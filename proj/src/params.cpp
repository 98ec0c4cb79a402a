#include "trackattr/params.hpp"

#include <cmath>
#include <cstring>

#include "trackattr/error.hpp"
#include "trackattr/rng.hpp"

namespace trackattr {

void ParamStore::add(const std::string& name, Tensor t) {
    if (name.empty()) throw ValidationError("parameter name must be non-empty");
    if (index_.count(name)) throw ValidationError("duplicate parameter name: " + name);
    order_.push_back(name);
    index_.emplace(name, std::move(t));
}

Tensor& ParamStore::tensor(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::tensor(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
    return it->second;
}

std::size_t ParamStore::total_elements() const {
    std::size_t n = 0;
    for (const auto& name : order_) n += index_.at(name).numel();
    return n;
}

void ParamStore::add_all(const ParamStore& other, const std::string& prefix) {
    for (const auto& name : other.names()) add(prefix + name, other.tensor(name));
}

std::uint64_t ParamStore::checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    auto fold = [&h](const void* bytes, std::size_t n) {
        const unsigned char* p = static_cast<const unsigned char*>(bytes);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& name : order_) {
        fold(name.data(), name.size());
        const Tensor& t = index_.at(name);
        for (int d : t.shape) {
            std::int64_t v = d;
            fold(&v, sizeof v);
        }
        fold(t.data.data(), t.data.size() * sizeof(double));
    }
    return h;
}

Tensor init_uniform_fanin(std::vector<int> shape, int fan_in, std::uint64_t seed) {
    if (fan_in <= 0) throw ValidationError("fan_in must be positive");
    double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (double& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

}  // namespace trackattr
