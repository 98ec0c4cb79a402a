#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trackattr/tensor.hpp"

namespace trackattr {

// Named parameter tensors in bottom-to-top layer order. Value semantics:
// copying a ParamStore yields fully disjoint storage.
class ParamStore {
public:
    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Tensor& tensor(const std::string& name);
    const Tensor& tensor(const std::string& name) const;
    // Insertion order, bottom layer first.
    const std::vector<std::string>& names() const { return order_; }
    std::size_t size() const { return order_.size(); }
    std::size_t total_elements() const;

    // Copies every tensor of `other` under prefix+name, preserving order.
    void add_all(const ParamStore& other, const std::string& prefix);

    // FNV-1a over names, shapes, and raw little-endian value bytes.
    std::uint64_t checksum() const;

private:
    std::vector<std::string> order_;
    std::map<std::string, Tensor> index_;
};

// Uniform init in [-sqrt(3/fan_in), +sqrt(3/fan_in)] (unit-variance inputs
// keep pre-activations at O(1)), seeded per tensor.
Tensor init_uniform_fanin(std::vector<int> shape, int fan_in, std::uint64_t seed);

}  // namespace trackattr
