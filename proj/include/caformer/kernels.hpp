#pragma once

#include <cstddef>
#include <string_view>

namespace caformer::kern {

// Flat f64 kernels behind a function-pointer table. Two implementations exist:
// a scalar reference (`scalar_ops`) and an AVX2/FMA variant (`avx2_ops`,
// compiled in its own TU with -mavx2 -mfma). The active table is picked at
// startup from CPUID and can be forced for tests or from the CLI.
//
// Exactness contract, checked by the equivalence tests:
//   * add/sub/mul/scale/axpy/relu/relu_mask_mul: bit-identical across ISAs
//     (pure lane-wise ops; AVX2 relu uses cmp+and so -0.0 maps to +0.0 exactly
//     like the scalar branch).
//   * sum/dot/max/gemm_acc: max is bit-identical (pure selection); sum/dot/
//     gemm differ by accumulation order and FMA, equal to ~1e-13 relative.
struct Ops {
    const char* name;

    // out[i] = a[i] (+|-|*) b[i]
    void (*add)(const double* a, const double* b, double* out, std::size_t n);
    void (*sub)(const double* a, const double* b, double* out, std::size_t n);
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    // out[i] = a[i] * c
    void (*scale)(const double* a, double c, double* out, std::size_t n);
    // y[i] += c * x[i]
    void (*axpy)(double c, const double* x, double* y, std::size_t n);

    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* a, std::size_t n);
    double (*max)(const double* a, std::size_t n); // n >= 1, finite input

    // out[i] = a[i] > 0 ? a[i] : 0
    void (*relu)(const double* a, double* out, std::size_t n);
    // out[i] = x[i] > 0 ? g[i] : 0   (backward of relu)
    void (*relu_mask_mul)(const double* x, const double* g, double* out, std::size_t n);

    // c[r][cc] += sum_k a[r][k] * b[k][cc]; row-major contiguous, accumulate
    // semantics (caller zero-fills when a plain product is wanted).
    void (*gemm_acc)(const double* a, const double* b, double* c,
                     std::size_t rows, std::size_t inner, std::size_t cols);
};

extern const Ops scalar_ops;
extern const Ops avx2_ops; // present even when unusable; check cpu_supports_avx2()

bool cpu_supports_avx2();

// Active table; defaults to the best supported ISA at first use.
const Ops& ops();

// Force a backend: "scalar", "avx2", or "auto". Returns false (and leaves the
// selection unchanged) for unknown names; throws ContractError when "avx2" is
// requested on a machine without it.
bool select_isa(std::string_view name);
const char* active_isa_name();

} // namespace caformer::kern
