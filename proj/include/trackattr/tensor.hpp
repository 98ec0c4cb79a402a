#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace trackattr {

// Dense row-major float64 tensor. Image batches use NHWC layout.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);
    Tensor(std::vector<int> s, std::vector<double> d);

    static std::size_t numel_of(const std::vector<int>& shape);

    std::size_t numel() const { return data.size(); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const;

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
};

std::string shape_string(const std::vector<int>& shape);

// Throws NumericError naming `context` if any value is NaN or infinite.
void check_finite(const Tensor& t, const std::string& context);

}  // namespace trackattr
