#include "caformer/patching.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace caformer {

std::size_t patch_count(std::size_t L, std::size_t P, std::size_t S) {
    if (P < 1 || P > L || S < 1 || S > P)
        throw ContractError("patch_count: need 1 <= P <= L and 1 <= S <= P, got L=" +
                            std::to_string(L) + " P=" + std::to_string(P) +
                            " S=" + std::to_string(S));
    return (L - P) / S + 2;
}

PatchSet make_patches(const NdArray& series, std::size_t P, std::size_t S) {
    if (series.rank() != 2)
        throw ContractError("make_patches: series must be (M, L), got " +
                            shape_string(series.shape()));
    const std::size_t M = series.dim(0), L = series.dim(1);
    const std::size_t N = patch_count(L, P, S);
    require_finite(series, "make_patches");

    PatchSet ps;
    ps.P = P;
    ps.S = S;
    ps.L = L;
    ps.patches = NdArray::zeros({M, P, N});
    for (std::size_t m = 0; m < M; ++m) {
        const double* row = series.data() + m * L;
        const double last = row[L - 1];
        for (std::size_t j = 0; j < N; ++j) {
            const std::size_t start = j * S;
            for (std::size_t p = 0; p < P; ++p) {
                const std::size_t t = start + p; // index into the padded series
                ps.patches.at({m, p, j}) = t < L ? row[t] : last;
            }
        }
    }
    return ps;
}

void in_patch_normalize(PatchSet& ps, double eps) {
    if (ps.normalized) throw ContractError("in_patch_normalize: already normalized");
    if (!(eps > 0.0)) throw ContractError("in_patch_normalize: eps must be positive");
    const std::size_t M = ps.patches.dim(0), P = ps.patches.dim(1), N = ps.patches.dim(2);
    ps.mean = NdArray::zeros({M, N});
    ps.sigma = NdArray::zeros({M, N});
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t j = 0; j < N; ++j) {
            double mu = 0.0;
            for (std::size_t p = 0; p < P; ++p) mu += ps.patches.at({m, p, j});
            mu /= static_cast<double>(P);
            double var = 0.0;
            for (std::size_t p = 0; p < P; ++p) {
                const double d = ps.patches.at({m, p, j}) - mu;
                var += d * d;
            }
            var /= static_cast<double>(P);
            const double sd = std::sqrt(var);
            const double sigma = sd < eps ? eps : sd;
            ps.mean.at({m, j}) = mu;
            ps.sigma.at({m, j}) = sigma;
            for (std::size_t p = 0; p < P; ++p) {
                double& v = ps.patches.at({m, p, j});
                v = (v - mu) / sigma;
            }
        }
    }
    ps.normalized = true;
}

NdArray denormalize_patches(const PatchSet& ps) {
    if (!ps.normalized) throw ContractError("denormalize_patches: PatchSet is not normalized");
    const std::size_t M = ps.patches.dim(0), P = ps.patches.dim(1), N = ps.patches.dim(2);
    NdArray out = NdArray::zeros({M, P, N});
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t j = 0; j < N; ++j) {
            const double mu = ps.mean.at({m, j});
            const double sigma = ps.sigma.at({m, j});
            for (std::size_t p = 0; p < P; ++p)
                out.at({m, p, j}) = ps.patches.at({m, p, j}) * sigma + mu;
        }
    return out;
}

NdArray unpatch(const NdArray& patches, std::size_t L, std::size_t S) {
    if (patches.rank() != 3)
        throw ContractError("unpatch: want (M, P, N), got " + shape_string(patches.shape()));
    const std::size_t M = patches.dim(0), P = patches.dim(1), N = patches.dim(2);
    if (S < 1 || S > P) throw ContractError("unpatch: need 1 <= S <= P");
    if (patch_count(L, P, S) != N)
        throw ContractError("unpatch: " + std::to_string(N) + " patches inconsistent with L=" +
                            std::to_string(L));
    NdArray out = NdArray::zeros({M, L});
    std::vector<double> cover(L, 0.0);
    std::vector<double> acc(L, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
        std::fill(cover.begin(), cover.end(), 0.0);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j = 0; j < N; ++j)
            for (std::size_t p = 0; p < P; ++p) {
                const std::size_t t = j * S + p;
                if (t < L) {
                    acc[t] += patches.at({m, p, j});
                    cover[t] += 1.0;
                }
            }
        for (std::size_t t = 0; t < L; ++t) {
            // Every step is covered by construction; guard anyway.
            if (cover[t] == 0.0)
                throw ContractError("unpatch: step " + std::to_string(t) + " uncovered");
            out.at({m, t}) = acc[t] / cover[t];
        }
    }
    return out;
}

} // namespace caformer
