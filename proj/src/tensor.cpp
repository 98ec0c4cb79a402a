#include "trackattr/tensor.hpp"

#include <cmath>
#include <sstream>

#include "trackattr/error.hpp"

namespace trackattr {

std::size_t Tensor::numel_of(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != data.size())
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_string(shape));
}

int Tensor::dim(int i) const {
    if (i < 0 || i >= ndim())
        throw ShapeError("dimension index " + std::to_string(i) + " out of range for shape " +
                         shape_string(shape));
    return shape[static_cast<std::size_t>(i)];
}

Tensor Tensor::full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = v;
    return t;
}

std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

void check_finite(const Tensor& t, const std::string& context) {
    for (double v : t.data)
        if (!std::isfinite(v)) throw NumericError("non-finite value in " + context);
}

}  // namespace trackattr
