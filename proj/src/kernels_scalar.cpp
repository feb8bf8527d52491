#include "caformer/kernels.hpp"

// Reference kernels. Deliberately plain loops: this is the semantics the AVX2
// variants are tested against.

namespace caformer::kern {
namespace {

void s_add(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void s_sub(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void s_mul(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void s_scale(const double* a, double c, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * c;
}

void s_axpy(double c, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += c * x[i];
}

double s_dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double s_sum(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

double s_max(const double* a, std::size_t n) {
    double m = a[0];
    for (std::size_t i = 1; i < n; ++i)
        if (a[i] > m) m = a[i];
    return m;
}

void s_relu(const double* a, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void s_relu_mask_mul(const double* x, const double* g, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

void s_gemm_acc(const double* a, const double* b, double* c,
                std::size_t rows, std::size_t inner, std::size_t cols) {
    // i-k-j order: stream through b and c rows; same loop nest as the AVX2
    // variant so the only cross-ISA differences are lane order and FMA.
    for (std::size_t i = 0; i < rows; ++i) {
        const double* arow = a + i * inner;
        double* crow = c + i * cols;
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = arow[k];
            const double* brow = b + k * cols;
            for (std::size_t j = 0; j < cols; ++j) crow[j] += aik * brow[j];
        }
    }
}

} // namespace

const Ops scalar_ops = {
    "scalar",
    s_add, s_sub, s_mul, s_scale, s_axpy,
    s_dot, s_sum, s_max,
    s_relu, s_relu_mask_mul,
    s_gemm_acc,
};

} // namespace caformer::kern
