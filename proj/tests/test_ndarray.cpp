#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>

#include "caformer/nd_array.hpp"

using namespace caformer;

TEST_CASE("shape helpers") {
    CHECK(shape_product({}) == 1);
    CHECK(shape_product({4}) == 4);
    CHECK(shape_product({2, 3, 4}) == 24);
    CHECK(shape_string({2, 3}) == "(2,3)");
    CHECK(row_major_strides({2, 3, 4}) == Shape{12, 4, 1});
    CHECK(row_major_strides({5}) == Shape{1});
}

TEST_CASE("construction and factories") {
    NdArray a({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(a.rank() == 2);
    CHECK(a.dim(0) == 2);
    CHECK(a.dim(1) == 3);
    CHECK(a.size() == 6);
    CHECK_FALSE(a.empty());

    CHECK_THROWS_AS(NdArray({2, 2}, {1.0, 2.0}), ContractError); // size mismatch

    NdArray z = NdArray::zeros({3, 2});
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);
    NdArray f = NdArray::full({4}, 2.5);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == 2.5);
    NdArray s = NdArray::scalar(-7.0);
    CHECK(s.shape() == Shape{1});
    CHECK(s[0] == -7.0);

    NdArray d;
    CHECK(d.empty());
    CHECK(d.rank() == 0);
    CHECK_THROWS_AS(d.dim(0), ContractError);
}

TEST_CASE("multi-index access is row-major") {
    NdArray a({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(a.at({0, 0}) == 1);
    CHECK(a.at({0, 2}) == 3);
    CHECK(a.at({1, 0}) == 4);
    CHECK(a.at({1, 2}) == 6);
    a.at({1, 1}) = 50;
    CHECK(a[4] == 50);
    CHECK(a.offset({1, 2}) == 5);
    CHECK_THROWS_AS(a.at({1, 2, 0}), ContractError); // rank mismatch

    NdArray c({2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(c.at({1, 0, 1}) == 5);
    CHECK(c.at({0, 1, 0}) == 2);
}

TEST_CASE("reshape preserves data") {
    NdArray a({2, 3}, {1, 2, 3, 4, 5, 6});
    NdArray b = a.reshaped({3, 2});
    CHECK(b.shape() == Shape{3, 2});
    CHECK(b.at({2, 1}) == 6);
    CHECK_THROWS_AS(a.reshaped({4, 2}), ContractError);
}

TEST_CASE("finiteness guards") {
    NdArray ok({3}, {1.0, -2.0, 0.0});
    CHECK_NOTHROW(require_finite(ok, "test"));
    CHECK(all_finite(ok.data(), ok.size()));

    NdArray bad_nan({2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
    CHECK_FALSE(all_finite(bad_nan.data(), bad_nan.size()));
    CHECK_THROWS_AS(require_finite(bad_nan, "test"), NumericError);

    NdArray bad_inf({2}, {std::numeric_limits<double>::infinity(), 0.0});
    CHECK_THROWS_AS(require_finite(bad_inf, "test"), NumericError);
}

TEST_CASE("same-shape guard") {
    NdArray a = NdArray::zeros({2, 3});
    NdArray b = NdArray::zeros({2, 3});
    NdArray c = NdArray::zeros({3, 2});
    CHECK_NOTHROW(require_same_shape(a, b, "op"));
    CHECK_THROWS_AS(require_same_shape(a, c, "op"), ContractError);
}

TEST_CASE("gradient buffer") {
    NdArray a({2}, {1.0, 2.0});
    CHECK_FALSE(a.grad.has_value());
    a.zero_grad();
    REQUIRE(a.grad.has_value());
    CHECK(a.grad->size() == 2);
    CHECK((*a.grad)[0] == 0.0);
    (*a.grad)[1] = 9.0;
    a.zero_grad();
    CHECK((*a.grad)[1] == 0.0);
}
