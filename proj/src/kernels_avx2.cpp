#include "caformer/kernels.hpp"

// AVX2/FMA kernels. This TU alone is compiled with -mavx2 -mfma; nothing here
// may be called unless cpu_supports_avx2() returned true (the dispatcher in
// kernels.cpp guarantees that).

#ifndef CAFORMER_NO_AVX2_TU

#include <immintrin.h>

namespace caformer::kern {
namespace {

void v_add(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void v_sub(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void v_mul(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void v_scale(const double* a, double c, double* out, std::size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vc));
    for (; i < n; ++i) out[i] = a[i] * c;
}

void v_axpy(double c, const double* x, double* y, std::size_t n) {
    // Separate mul and add (no fmadd), and an intrinsic tail: axpy is in the
    // bit-identical group, so the rounding must match the scalar backend,
    // which has no fused step. A plain tail loop could be contracted to FMA
    // by the compiler in this TU.
    const __m256d vc = _mm256_set1_pd(c);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(
            y + i, _mm256_add_pd(_mm256_loadu_pd(y + i),
                                 _mm256_mul_pd(vc, _mm256_loadu_pd(x + i))));
    const __m128d sc = _mm_set_sd(c);
    for (; i < n; ++i)
        _mm_store_sd(y + i, _mm_add_sd(_mm_load_sd(y + i), _mm_mul_sd(sc, _mm_load_sd(x + i))));
}

double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double v_dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    double r = hsum(acc);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double v_sum(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double r = hsum(acc);
    for (; i < n; ++i) r += a[i];
    return r;
}

double v_max(const double* a, std::size_t n) {
    std::size_t i = 0;
    double m = a[0];
    if (n >= 4) {
        __m256d vm = _mm256_loadu_pd(a);
        for (i = 4; i + 4 <= n; i += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(a + i));
        __m128d lo = _mm256_castpd256_pd128(vm);
        __m128d hi = _mm256_extractf128_pd(vm, 1);
        lo = _mm_max_pd(lo, hi);
        m = _mm_cvtsd_f64(_mm_max_sd(lo, _mm_unpackhi_pd(lo, lo)));
    } else {
        i = 1;
    }
    for (; i < n; ++i)
        if (a[i] > m) m = a[i];
    return m;
}

// cmp+and instead of max_pd so -0.0 maps to +0.0, matching the scalar branch
// bit-for-bit.
void v_relu(const double* a, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d x = _mm256_loadu_pd(a + i);
        _mm256_storeu_pd(out + i, _mm256_and_pd(x, _mm256_cmp_pd(x, zero, _CMP_GT_OQ)));
    }
    for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void v_relu_mask_mul(const double* x, const double* g, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(out + i, _mm256_and_pd(_mm256_loadu_pd(g + i), mask));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

void v_gemm_acc(const double* a, const double* b, double* c,
                std::size_t rows, std::size_t inner, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* arow = a + i * inner;
        double* crow = c + i * cols;
        for (std::size_t k = 0; k < inner; ++k) {
            const __m256d aik = _mm256_set1_pd(arow[k]);
            const double* brow = b + k * cols;
            std::size_t j = 0;
            for (; j + 4 <= cols; j += 4)
                _mm256_storeu_pd(crow + j,
                                 _mm256_fmadd_pd(aik, _mm256_loadu_pd(brow + j),
                                                 _mm256_loadu_pd(crow + j)));
            for (; j < cols; ++j) crow[j] += arow[k] * brow[j];
        }
    }
}

} // namespace

const Ops avx2_ops = {
    "avx2",
    v_add, v_sub, v_mul, v_scale, v_axpy,
    v_dot, v_sum, v_max,
    v_relu, v_relu_mask_mul,
    v_gemm_acc,
};

} // namespace caformer::kern

#else // CAFORMER_NO_AVX2_TU: compiler can't target AVX2; alias the scalar table.

namespace caformer::kern {
const Ops avx2_ops = scalar_ops;
} // namespace caformer::kern

#endif
