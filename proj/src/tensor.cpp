#include "optbench/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "optbench/errors.hpp"

namespace optbench {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

static void check_shape(const Shape& shape) {
    if (shape.empty()) {
        throw DimensionError("tensor shape must have at least one dimension");
    }
    if (std::find(shape.begin(), shape.end(), std::size_t{0}) != shape.end()) {
        throw DimensionError("tensor shape " + shape_string(shape) + " has a zero dimension");
    }
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("shape " + shape_string(shape_) + " needs " + std::to_string(shape_numel(shape_)) +
                             " elements, got " + std::to_string(data_.size()));
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DimensionError("ragged rows in Tensor::from_rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != size()) {
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace optbench
