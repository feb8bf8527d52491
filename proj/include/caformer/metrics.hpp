#pragma once

#include <cstdint>
#include <vector>

#include "caformer/nd_array.hpp"

namespace caformer {

struct RegressionMetrics {
    double mse = 0.0;
    double mae = 0.0;
};

RegressionMetrics regression_metrics(const std::vector<double>& truth,
                                     const std::vector<double>& pred);
RegressionMetrics regression_metrics(const NdArray& truth, const NdArray& pred);

// Symmetric percentage error on the 0..200 scale; a 0/0 term contributes 0.
double smape(const std::vector<double>& truth, const std::vector<double>& pred);

// Percentage error on the 0..100 scale; throws NumericError when truth hits zero.
double mape(const std::vector<double>& truth, const std::vector<double>& pred);

// Scaled error against the seasonal-naive in-sample forecast at lag m.
// Throws NumericError when the in-sample seasonal differences are all zero.
double mase(const std::vector<double>& truth, const std::vector<double>& pred,
            const std::vector<double>& insample, std::size_t m);

struct M4Metrics {
    double smape = 0.0;
    double mape = 0.0;   // meaningful only when mape_defined
    double mase = 0.0;
    double owa = 0.0;
    bool mape_defined = true; // false when truth contains zeros
};

// naive2_smape / naive2_mase are the benchmark's scores on the same series.
M4Metrics m4_metrics(const std::vector<double>& truth, const std::vector<double>& pred,
                     const std::vector<double>& insample, std::size_t m,
                     double naive2_smape, double naive2_mase);

struct DetectionMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
};

// Point-wise detection scores; with point_adjust, one hit inside a true
// anomalous segment credits the whole segment before counting.
DetectionMetrics detection_metrics(const std::vector<std::uint8_t>& truth,
                                   const std::vector<std::uint8_t>& pred, bool point_adjust);

double accuracy(const std::vector<int>& truth, const std::vector<int>& pred);

// Seasonally adjusted naive benchmark: when the lag-m autocorrelation passes a
// 90% significance test, forecast last-deseasonalized-value times the seasonal
// index; otherwise plain last-value. Requires insample length >= max(2m, 2).
std::vector<double> naive2_forecast(const std::vector<double>& insample, std::size_t m,
                                    std::size_t horizon);

} // namespace caformer
