#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "caformer/data.hpp"

using namespace caformer;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content)
        : path("/tmp/caformer_data_test_" + name) {
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

// Windowing validates that dim_names matches M, so hand-built fixtures fill it.
SeriesDataset make_ds(NdArray values) {
    SeriesDataset ds;
    ds.values = std::move(values);
    for (std::size_t m = 0; m < ds.M(); ++m)
        ds.dim_names.push_back("dim" + std::to_string(m));
    return ds;
}

// Magnitude of one DFT bin, summed over dimensions.
double bin_energy(const NdArray& values, std::size_t k) {
    const std::size_t M = values.dim(0), L = values.dim(1);
    double total = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        double re = 0.0, im = 0.0;
        for (std::size_t t = 0; t < L; ++t) {
            const double ang = 2.0 * 3.14159265358979323846 * static_cast<double>(k * t) /
                               static_cast<double>(L);
            re += values.at({m, t}) * std::cos(ang);
            im -= values.at({m, t}) * std::sin(ang);
        }
        total += std::sqrt(re * re + im * im);
    }
    return total;
}

} // namespace

TEST_CASE("csv loading: plain numeric matrix") {
    TempFile f("plain.csv", "1.5,2\n3,4\n5,6\n7,8\n9,10\n11,12\n13,14\n15,16\n17,18\n19,20\n");
    SeriesDataset ds = load_csv(f.path, /*has_header=*/false);
    CHECK(ds.M() == 2);
    CHECK(ds.L() == 10);
    CHECK(ds.values.at({0, 0}) == 1.5);
    CHECK(ds.values.at({1, 9}) == 20.0);
    CHECK(ds.train_end == 7); // 70/10/20 default
    CHECK(ds.val_end == 8);
    CHECK(ds.dim_names.size() == 2);
}

TEST_CASE("csv loading: header and timestamp column dropped") {
    TempFile f("ts.csv",
               "time,a,b\n2020-01-01,1,10\n2020-01-02,2,20\n2020-01-03,3,30\n");
    SeriesDataset ds = load_csv(f.path, /*has_header=*/true, /*timestamp_col=*/0);
    CHECK(ds.M() == 2);
    CHECK(ds.L() == 3);
    CHECK(ds.dim_names == std::vector<std::string>{"a", "b"});
    CHECK(ds.values.at({0, 2}) == 3.0);
    CHECK(ds.values.at({1, 0}) == 10.0);
}

TEST_CASE("csv loading: bad cell names its row") {
    TempFile f("bad.csv", "1,2\n3,4\n5,6\n7,8\n9,10\n11,12\nabc,14\n");
    try {
        load_csv(f.path, false);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("7") != std::string::npos);
    }
}

TEST_CASE("csv save/load round-trips values exactly") {
    SeriesDataset ds;
    ds.values = NdArray({2, 5}, {0.1, 1.0 / 3.0, -2.718281828459045, 1e-17, 4.0,
                                 5.0, 6.0, 7.0, 8.123456789012345, 9.0});
    ds.dim_names = {"x", "y"};
    ds.train_end = 3;
    ds.val_end = 4;
    TempFile f("rt.csv", "");
    save_csv(f.path, ds);
    SeriesDataset back = load_csv(f.path, true);
    REQUIRE(back.M() == 2);
    REQUIRE(back.L() == 5);
    for (std::size_t i = 0; i < ds.values.size(); ++i)
        CHECK(back.values[i] == ds.values[i]); // %.17g survives the trip bitwise
}

TEST_CASE("forecast windows: counts and layout") {
    SeriesDataset ds = make_ds(NdArray::zeros({1, 400}));
    for (std::size_t t = 0; t < 400; ++t) ds.values.at({0, t}) = static_cast<double>(t);
    ds.train_end = 200;
    ds.val_end = 240;
    ds.horizon = 48;

    auto wins = make_windows(ds, Split::train, 96, 48, 1);
    CHECK(wins.size() == 57); // 200 - 96 - 48 + 1
    CHECK(wins.front().t0 == 0);
    CHECK(wins.back().t0 == 56);
    CHECK(wins[0].input.shape() == Shape{1, 96});
    CHECK(wins[0].target.shape() == Shape{1, 48});
    // target immediately follows the input
    CHECK(wins[3].input.at({0, 0}) == 3.0);
    CHECK(wins[3].input.at({0, 95}) == 98.0);
    CHECK(wins[3].target.at({0, 0}) == 99.0);

    // test split starts at val_end
    auto test_wins = make_windows(ds, Split::test, 96, 48, 1);
    CHECK(test_wins.front().t0 == 240);
    CHECK(test_wins.size() == 160 - 96 - 48 + 1);

    // stride = whole usable span -> single window
    auto one = make_windows(ds, Split::train, 96, 48, 200);
    CHECK(one.size() == 1);

    CHECK_THROWS_AS(make_windows(ds, Split::train, 96, 0, 1), ContractError);
}

TEST_CASE("short split yields no windows rather than an error") {
    SeriesDataset ds = make_ds(NdArray::zeros({1, 100}));
    ds.train_end = 70;
    ds.val_end = 80; // 10-step validation segment
    CHECK(make_windows(ds, Split::val, 48, 24, 1).empty());
}

TEST_CASE("reconstruction windows slice the mask") {
    SeriesDataset ds = make_ds(NdArray::zeros({2, 60}));
    ds.train_end = 40;
    ds.val_end = 50;
    NdArray mask = NdArray::zeros({2, 60});
    mask.at({0, 5}) = 1.0;
    mask.at({1, 17}) = 1.0;
    ds.mask = mask;
    auto wins = make_recon_windows(ds, Split::train, 20, 20);
    REQUIRE(wins.size() == 2);
    CHECK(wins[0].target.shape() == wins[0].input.shape());
    CHECK(wins[0].mask.at({0, 5}) == 1.0);
    CHECK(wins[0].mask.at({1, 17}) == 1.0);
    CHECK(wins[1].mask.at({0, 5}) == 0.0);
}

TEST_CASE("train-split statistics and row normalization round-trip") {
    SeriesDataset ds = make_ds(NdArray({1, 10}, {2, 4, 6, 8, 0, 100, 100, 100, 100, 100}));
    ds.train_end = 5;
    ds.val_end = 6;
    NormStats st = train_split_stats(ds);
    CHECK(st.mean[0] == doctest::Approx(4.0)); // stats ignore the test split
    NdArray norm = normalize_rows(ds.values, st);
    NdArray back = denormalize_rows(norm, st);
    for (std::size_t i = 0; i < ds.values.size(); ++i)
        CHECK(back[i] == doctest::Approx(ds.values[i]).epsilon(1e-12));
}

TEST_CASE("imputation mask: exact count, determinism, untouched values") {
    SeriesDataset ds = make_ds(NdArray::zeros({4, 96}));
    for (std::size_t i = 0; i < ds.values.size(); ++i)
        ds.values.data()[i] = static_cast<double>(i);
    ds.train_end = 67;
    ds.val_end = 76;

    SeriesDataset masked = apply_imputation_mask(ds, 0.25, 9);
    REQUIRE(masked.mask.has_value());
    double count = 0.0;
    for (std::size_t i = 0; i < masked.mask->size(); ++i) {
        const double v = (*masked.mask)[i];
        CHECK((v == 0.0 || v == 1.0));
        count += v;
    }
    CHECK(count == 96.0); // round(0.25 * 4 * 96)
    for (std::size_t i = 0; i < ds.values.size(); ++i)
        CHECK(masked.values[i] == ds.values[i]);

    SeriesDataset again = apply_imputation_mask(ds, 0.25, 9);
    for (std::size_t i = 0; i < masked.mask->size(); ++i)
        CHECK((*again.mask)[i] == (*masked.mask)[i]);

    SeriesDataset other = apply_imputation_mask(ds, 0.25, 10);
    bool differs = false;
    for (std::size_t i = 0; i < masked.mask->size(); ++i)
        if ((*other.mask)[i] != (*masked.mask)[i]) differs = true;
    CHECK(differs);
}

TEST_CASE("mask csv shape check") {
    TempFile f("m.csv", "0,1\n1,0\n");
    NdArray m = load_mask_csv(f.path, 2, 2);
    CHECK(m.at({0, 1}) == 1.0);
    CHECK_THROWS_AS(load_mask_csv(f.path, 3, 2), ParseError);
}

TEST_CASE("synthetic generators are deterministic") {
    auto a = synth_generate("coupled_ar", 4, 512, 7);
    auto b = synth_generate("coupled_ar", 4, 512, 7);
    REQUIRE(a.size() == 1);
    REQUIRE(a[0].values.size() == b[0].values.size());
    for (std::size_t i = 0; i < a[0].values.size(); ++i)
        CHECK(a[0].values[i] == b[0].values[i]);
    CHECK(a[0].M() == 4);
    CHECK(a[0].L() == 512);
    CHECK(a[0].train_end == 358); // 70%
    CHECK(a[0].val_end == 410);   // 80%

    auto c = synth_generate("coupled_ar", 4, 512, 8);
    bool differs = false;
    for (std::size_t i = 0; i < a[0].values.size(); ++i)
        if (a[0].values[i] != c[0].values[i]) differs = true;
    CHECK(differs);

    CHECK_THROWS_AS(synth_generate("warp", 4, 512, 1), ContractError);
}

TEST_CASE("spiked generator labels exactly its injected anomalies") {
    SynthParams sp;
    sp.n_anomalies = 10;
    auto sets = synth_generate("spiked", 3, 512, 5, sp);
    REQUIRE(sets.size() == 1);
    const SeriesDataset& ds = sets[0];
    REQUIRE(ds.anomaly.size() == 512);
    std::size_t flags = 0;
    for (std::size_t t = 0; t < 512; ++t)
        if (ds.anomaly[t]) {
            ++flags;
            CHECK(t >= ds.val_end); // anomalies live in the test span
        }
    CHECK(flags == 10);
}

TEST_CASE("two-class populations separate by spectrum at zero noise") {
    SynthParams sp;
    sp.n_series = 20;
    sp.noise = 0.0;
    auto corpus = synth_generate("two_class", 2, 64, 3, sp);
    REQUIRE(corpus.size() == 20);
    for (const SeriesDataset& ds : corpus) {
        REQUIRE(ds.label.has_value());
        // class 0 oscillates with period 16 (bin 4 of 64), class 1 with period 8 (bin 8)
        const double e16 = bin_energy(ds.values, 4);
        const double e8 = bin_energy(ds.values, 8);
        const int spectral_class = e8 > e16 ? 1 : 0;
        CHECK(spectral_class == *ds.label);
    }
}

TEST_CASE("seasonal generator is periodic-dominant") {
    auto sets = synth_generate("seasonal", 2, 256, 11);
    const SeriesDataset& ds = sets[0];
    CHECK(ds.M() == 2);
    CHECK(ds.L() == 256);
    // sanity: values bounded and non-constant
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < ds.values.size(); ++i) {
        lo = std::min(lo, ds.values[i]);
        hi = std::max(hi, ds.values[i]);
    }
    CHECK(hi > lo);
    CHECK(hi < 100.0);
    CHECK(lo > -100.0);
}
