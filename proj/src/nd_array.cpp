#include "caformer/nd_array.hpp"

#include <cmath>
#include <sstream>

namespace caformer {

std::size_t shape_product(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ')';
    return out.str();
}

Shape row_major_strides(const Shape& shape) {
    Shape strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;)
        strides[i - 1] = strides[i] * shape[i];
    return strides;
}

NdArray::NdArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    for (std::size_t d : shape_)
        if (d == 0) throw ContractError("NdArray: zero extent in shape " + shape_string(shape_));
    if (shape_product(shape_) != data_.size())
        throw ContractError("NdArray: shape " + shape_string(shape_) + " wants " +
                            std::to_string(shape_product(shape_)) + " elements, got " +
                            std::to_string(data_.size()));
}

NdArray NdArray::zeros(Shape shape) {
    std::vector<double> data(shape_product(shape), 0.0);
    return NdArray(std::move(shape), std::move(data));
}

NdArray NdArray::full(Shape shape, double value) {
    std::vector<double> data(shape_product(shape), value);
    return NdArray(std::move(shape), std::move(data));
}

NdArray NdArray::scalar(double value) { return NdArray({1}, {value}); }

std::size_t NdArray::dim(std::size_t axis) const {
    if (axis >= shape_.size())
        throw ContractError("NdArray::dim: axis " + std::to_string(axis) + " out of range for " +
                            shape_string(shape_));
    return shape_[axis];
}

std::size_t NdArray::offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size())
        throw ContractError("NdArray::at: " + std::to_string(idx.size()) +
                            " indices for shape " + shape_string(shape_));
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

NdArray NdArray::reshaped(Shape shape) const {
    if (shape_product(shape) != data_.size())
        throw ContractError("NdArray::reshaped: " + shape_string(shape_) + " -> " +
                            shape_string(shape) + " changes element count");
    NdArray out(std::move(shape), data_);
    return out;
}

void NdArray::zero_grad() {
    grad.emplace(data_.size(), 0.0);
}

bool all_finite(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

void require_finite(const double* p, std::size_t n, const char* op) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i]))
            throw NumericError(std::string(op) + ": non-finite value at flat index " +
                               std::to_string(i));
}

void require_finite(const NdArray& a, const char* op) {
    require_finite(a.data(), a.size(), op);
}

void require_same_shape(const NdArray& a, const NdArray& b, const char* op) {
    if (a.shape() != b.shape())
        throw ContractError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                            " vs " + shape_string(b.shape()));
}

} // namespace caformer
