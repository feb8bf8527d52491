#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "caformer/patching.hpp"
#include "caformer/rng.hpp"

using namespace caformer;

namespace {

NdArray random_series(Rng& rng, std::size_t M, std::size_t L) {
    NdArray s = NdArray::zeros({M, L});
    for (std::size_t i = 0; i < s.size(); ++i) s.data()[i] = rng.normal();
    return s;
}

} // namespace

TEST_CASE("patch_count formula") {
    CHECK(patch_count(96, 16, 8) == 12);
    CHECK(patch_count(36, 16, 8) == 4);
    CHECK(patch_count(32, 8, 4) == 8);
    CHECK(patch_count(20, 20, 5) == 2);  // zero quotient: just base + padded
    CHECK(patch_count(100, 10, 10) == 11); // divisible case still appends a padded patch
    CHECK_THROWS_AS(patch_count(10, 16, 8), ContractError); // P > L
    CHECK_THROWS_AS(patch_count(96, 16, 0), ContractError);
    CHECK_THROWS_AS(patch_count(96, 16, 17), ContractError); // S > P
    CHECK_THROWS_AS(patch_count(96, 0, 1), ContractError);
}

TEST_CASE("make_patches covers the padded series at the right starts") {
    Rng rng(1);
    const std::size_t M = 2, L = 96, P = 16, S = 8;
    NdArray series = random_series(rng, M, L);
    PatchSet ps = make_patches(series, P, S);
    const std::size_t N = patch_count(L, P, S);
    CHECK(ps.patches.shape() == Shape{M, P, N});
    CHECK(ps.L == L);
    CHECK_FALSE(ps.normalized);

    // patch j, offset p == padded_series[j*S + p]; padding repeats the last value
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t j = 0; j < N; ++j)
            for (std::size_t p = 0; p < P; ++p) {
                const std::size_t step = j * S + p;
                const double want = step < L ? series.at({m, step}) : series.at({m, L - 1});
                CHECK(ps.patches.at({m, p, j}) == want);
            }
    // last patch starts at 88 and the padded length is 104
    CHECK((N - 1) * S == 88);
    CHECK((N - 1) * S + P == 104);
}

TEST_CASE("non-overlapping patches tile the series") {
    Rng rng(2);
    NdArray series = random_series(rng, 1, 32);
    PatchSet ps = make_patches(series, 8, 8);
    CHECK(patch_count(32, 8, 8) == 5); // 4 tiles + 1 fully padded
    for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t p = 0; p < 8; ++p)
            CHECK(ps.patches.at({0, p, j}) == series.at({0, j * 8 + p}));
    for (std::size_t p = 0; p < 8; ++p) // the padded patch repeats the last value
        CHECK(ps.patches.at({0, p, 4}) == series.at({0, 31}));
}

TEST_CASE("constant series gives identical patches") {
    NdArray series = NdArray::full({1, 40}, 3.25);
    PatchSet ps = make_patches(series, 10, 5);
    for (std::size_t i = 0; i < ps.patches.size(); ++i) CHECK(ps.patches[i] == 3.25);
}

TEST_CASE("in-patch normalization standardizes every slice") {
    NdArray series({1, 3}, {1.0, 2.0, 3.0});
    PatchSet ps = make_patches(series, 3, 3);
    in_patch_normalize(ps);
    // first patch is [1,2,3]: mean 2, population std sqrt(2/3)
    const double s = std::sqrt(2.0 / 3.0);
    CHECK(ps.patches.at({0, 0, 0}) == doctest::Approx(-1.0 / s).epsilon(1e-9));
    CHECK(ps.patches.at({0, 1, 0}) == doctest::Approx(0.0));
    CHECK(ps.patches.at({0, 2, 0}) == doctest::Approx(1.0 / s).epsilon(1e-9));
    CHECK(std::abs(ps.patches.at({0, 0, 0})) == doctest::Approx(1.2247448713915889).epsilon(1e-9));
    CHECK(ps.normalized);
    CHECK(ps.mean.at({0, 0}) == 2.0);

    // constant patch maps to zeros under the eps guard
    NdArray flat = NdArray::full({1, 3}, 5.0);
    PatchSet psf = make_patches(flat, 3, 3);
    in_patch_normalize(psf);
    for (std::size_t p = 0; p < 3; ++p) CHECK(psf.patches.at({0, p, 0}) == 0.0);
}

TEST_CASE("normalization statistics hold per dimension and patch") {
    Rng rng(4);
    NdArray series = random_series(rng, 3, 96);
    PatchSet ps = make_patches(series, 16, 8);
    in_patch_normalize(ps);
    const std::size_t N = ps.patches.dim(2);
    for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t j = 0; j < N; ++j) {
            double mean = 0.0, var = 0.0;
            for (std::size_t p = 0; p < 16; ++p) mean += ps.patches.at({m, p, j});
            mean /= 16.0;
            for (std::size_t p = 0; p < 16; ++p) {
                const double d = ps.patches.at({m, p, j}) - mean;
                var += d * d;
            }
            var /= 16.0;
            CHECK(std::abs(mean) < 1e-9);
            CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
        }
}

TEST_CASE("denormalize inverts normalize") {
    Rng rng(5);
    NdArray series = random_series(rng, 2, 64);
    PatchSet ps = make_patches(series, 16, 8);
    const NdArray raw = ps.patches;
    in_patch_normalize(ps);
    NdArray back = denormalize_patches(ps);
    for (std::size_t i = 0; i < raw.size(); ++i)
        CHECK(back[i] == doctest::Approx(raw[i]).epsilon(1e-9));
}

TEST_CASE("unpatch inverts make_patches exactly") {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t M = 1 + rng.below(3);
        const std::size_t L = 40 + rng.below(80);
        NdArray series = random_series(rng, M, L);
        PatchSet ps = make_patches(series, 16, 8);
        NdArray back = unpatch(ps.patches, L, 8);
        REQUIRE(back.shape() == series.shape());
        for (std::size_t i = 0; i < series.size(); ++i) CHECK(back[i] == series[i]);
    }
}

TEST_CASE("unpatch averages disagreeing covers") {
    // Two patches covering step 8..15 with different contents average.
    Rng rng(7);
    NdArray series = random_series(rng, 1, 24);
    PatchSet ps = make_patches(series, 16, 8);
    NdArray tweaked = ps.patches;
    // Overwrite patch 1 (covers steps 8..23) with zeros.
    for (std::size_t p = 0; p < 16; ++p) tweaked.at({0, p, 1}) = 0.0;
    NdArray back = unpatch(tweaked, 24, 8);
    // Step 12 is covered by patch 0 (value = original) and patch 1 (0).
    CHECK(back.at({0, 12}) == doctest::Approx(series.at({0, 12}) / 2.0).epsilon(1e-12));
}
