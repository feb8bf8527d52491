#pragma once

#include <cstddef>

#include "caformer/nd_array.hpp"

namespace caformer {

// Overlapping patches of a multivariate series. The series is end-padded by
// repeating its final value S times; patch j covers steps [jS, jS+P) of the
// padded series, giving N = floor((L-P)/S) + 2 patches that cover every
// original step at least once.
struct PatchSet {
    NdArray patches;  // (M, P, N)
    NdArray mean;     // (M, N), set by in_patch_normalize
    NdArray sigma;    // (M, N), the guarded denominator max(std, eps)
    std::size_t P = 0;
    std::size_t S = 0;
    std::size_t L = 0; // original (unpadded) length
    bool normalized = false;
};

// N for a series of length L; requires 1 <= P <= L and 1 <= S <= P.
std::size_t patch_count(std::size_t L, std::size_t P, std::size_t S);

PatchSet make_patches(const NdArray& series /* (M, L) */, std::size_t P, std::size_t S);

// Standardize each (dimension, patch) slice in place: z = (x - mean) / max(std, eps),
// population std. Constant slices map to zeros. Stats retained for inversion.
void in_patch_normalize(PatchSet& ps, double eps = 1e-5);

// Undo in_patch_normalize using the stored stats.
NdArray denormalize_patches(const PatchSet& ps);

// Reassemble a series from unnormalized patches by averaging overlapping
// covers and truncating the padding.
NdArray unpatch(const NdArray& patches /* (M, P, N) */, std::size_t L, std::size_t S);

} // namespace caformer
