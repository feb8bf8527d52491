#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "caformer/error.hpp"

namespace caformer {

// Deterministic random source. mt19937_64 supplies the bit stream; the
// uniform/normal transforms are written out here instead of using
// std::uniform_real_distribution / std::normal_distribution because the
// standard leaves those algorithms unspecified — identical seeds must yield
// identical streams regardless of the standard library build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1): 53 random mantissa bits.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ContractError("Rng::below: n must be positive");
        // Rejection sampling to avoid modulo bias.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = eng_();
        while (v >= limit) v = eng_();
        return v % n;
    }

    // Standard normal via Box-Muller; caches the second deviate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform(); // log(0) guard
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Exponential(1) via inverse CDF; building block for Dirichlet rows.
    double exponential() {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return -std::log(u);
    }

    // Symmetric Dirichlet(1) row: iid Exp(1) normalized to sum 1.
    std::vector<double> dirichlet_row(std::size_t n) {
        if (n == 0) throw ContractError("Rng::dirichlet_row: n must be positive");
        std::vector<double> row(n);
        double total = 0.0;
        for (double& v : row) {
            v = exponential();
            total += v;
        }
        for (double& v : row) v /= total;
        return row;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace caformer
