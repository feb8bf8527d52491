#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "caformer/error.hpp"

namespace caformer {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& shape);
std::string shape_string(const Shape& shape);
Shape row_major_strides(const Shape& shape);

// Dense row-major f64 tensor. Also the gradient carrier: a leaf that wants a
// gradient sets requires_grad and backward() fills `grad` (same length as
// `data`, same shape implied).
class NdArray {
public:
    NdArray() = default;
    NdArray(Shape shape, std::vector<double> data);

    static NdArray zeros(Shape shape);
    static NdArray full(Shape shape, double value);
    static NdArray scalar(double value); // shape {1}

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    // Multi-index access; rank is validated, bounds are not (hot path).
    double& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
    double at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

    std::size_t offset(std::initializer_list<std::size_t> idx) const;

    // Same data, new shape (sizes must agree).
    NdArray reshaped(Shape shape) const;

    bool requires_grad = false;
    std::optional<std::vector<double>> grad;

    // Engage (or reset) the gradient buffer, zero-filled.
    void zero_grad();

private:
    Shape shape_;
    std::vector<double> data_;
};

// True when every element is finite.
bool all_finite(const double* p, std::size_t n);

// Throws NumericError naming `op` if any element is NaN/Inf.
void require_finite(const NdArray& a, const char* op);
void require_finite(const double* p, std::size_t n, const char* op);

void require_same_shape(const NdArray& a, const NdArray& b, const char* op);

} // namespace caformer
