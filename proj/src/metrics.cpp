#include "caformer/metrics.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "caformer/error.hpp"

namespace caformer {

namespace {

void check_pair(const char* op, std::size_t a, std::size_t b) {
    if (a == 0) throw ContractError(std::string(op) + ": empty input");
    if (a != b)
        throw ContractError(std::string(op) + ": length mismatch (" + std::to_string(a) + " vs " +
                            std::to_string(b) + ")");
}

} // namespace

RegressionMetrics regression_metrics(const std::vector<double>& truth,
                                     const std::vector<double>& pred) {
    check_pair("regression_metrics", truth.size(), pred.size());
    RegressionMetrics r;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = truth[i] - pred[i];
        r.mse += d * d;
        r.mae += std::abs(d);
    }
    const double n = static_cast<double>(truth.size());
    r.mse /= n;
    r.mae /= n;
    return r;
}

RegressionMetrics regression_metrics(const NdArray& truth, const NdArray& pred) {
    require_same_shape(truth, pred, "regression_metrics");
    std::vector<double> t(truth.data(), truth.data() + truth.size());
    std::vector<double> p(pred.data(), pred.data() + pred.size());
    return regression_metrics(t, p);
}

double smape(const std::vector<double>& truth, const std::vector<double>& pred) {
    check_pair("smape", truth.size(), pred.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double denom = std::abs(truth[i]) + std::abs(pred[i]);
        if (denom == 0.0) continue; // both exactly zero: a perfect term, count as 0
        acc += std::abs(truth[i] - pred[i]) / denom;
    }
    return 200.0 * acc / static_cast<double>(truth.size());
}

double mape(const std::vector<double>& truth, const std::vector<double>& pred) {
    check_pair("mape", truth.size(), pred.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == 0.0)
            throw NumericError("mape: truth value at index " + std::to_string(i) +
                               " is zero, percentage error undefined");
        acc += std::abs(truth[i] - pred[i]) / std::abs(truth[i]);
    }
    return 100.0 * acc / static_cast<double>(truth.size());
}

double mase(const std::vector<double>& truth, const std::vector<double>& pred,
            const std::vector<double>& insample, std::size_t m) {
    check_pair("mase", truth.size(), pred.size());
    if (m == 0) throw ContractError("mase: seasonality m must be >= 1");
    if (insample.size() <= m)
        throw ContractError("mase: insample length " + std::to_string(insample.size()) +
                            " must exceed seasonality " + std::to_string(m));
    double denom = 0.0;
    for (std::size_t j = m; j < insample.size(); ++j)
        denom += std::abs(insample[j] - insample[j - m]);
    denom /= static_cast<double>(insample.size() - m);
    if (denom == 0.0)
        throw NumericError("mase: degenerate insample (constant at seasonal lag " +
                           std::to_string(m) + "), scale undefined");
    double num = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) num += std::abs(truth[i] - pred[i]);
    num /= static_cast<double>(truth.size());
    return num / denom;
}

M4Metrics m4_metrics(const std::vector<double>& truth, const std::vector<double>& pred,
                     const std::vector<double>& insample, std::size_t m,
                     double naive2_smape, double naive2_mase) {
    M4Metrics out;
    out.smape = smape(truth, pred);
    out.mase = mase(truth, pred, insample, m);
    out.mape_defined = true;
    for (double v : truth)
        if (v == 0.0) out.mape_defined = false;
    if (out.mape_defined) out.mape = mape(truth, pred);
    if (!(naive2_smape > 0.0) || !(naive2_mase > 0.0))
        throw NumericError("m4_metrics: benchmark scores must be positive for the OWA ratio");
    out.owa = 0.5 * (out.smape / naive2_smape + out.mase / naive2_mase);
    return out;
}

DetectionMetrics detection_metrics(const std::vector<std::uint8_t>& truth,
                                   const std::vector<std::uint8_t>& pred, bool point_adjust) {
    if (truth.size() != pred.size())
        throw ContractError("detection_metrics: length mismatch (" + std::to_string(truth.size()) +
                            " vs " + std::to_string(pred.size()) + ")");
    std::vector<std::uint8_t> adj = pred;
    if (point_adjust) {
        // Credit a whole true anomalous segment once any point in it is hit.
        std::size_t i = 0;
        while (i < truth.size()) {
            if (!truth[i]) {
                ++i;
                continue;
            }
            std::size_t j = i;
            bool hit = false;
            while (j < truth.size() && truth[j]) {
                if (pred[j]) hit = true;
                ++j;
            }
            if (hit)
                for (std::size_t k = i; k < j; ++k) adj[k] = 1;
            i = j;
        }
    }
    DetectionMetrics d;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (adj[i] && truth[i]) ++d.tp;
        else if (adj[i] && !truth[i]) ++d.fp;
        else if (!adj[i] && truth[i]) ++d.fn;
    }
    d.precision = (d.tp + d.fp) ? static_cast<double>(d.tp) / static_cast<double>(d.tp + d.fp) : 0.0;
    d.recall = (d.tp + d.fn) ? static_cast<double>(d.tp) / static_cast<double>(d.tp + d.fn) : 0.0;
    const double pr = d.precision + d.recall;
    d.f1 = pr > 0.0 ? 2.0 * d.precision * d.recall / pr : 0.0;
    return d;
}

double accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
    check_pair("accuracy", truth.size(), pred.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (truth[i] == pred[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::vector<double> naive2_forecast(const std::vector<double>& insample, std::size_t m,
                                    std::size_t horizon) {
    const std::size_t n = insample.size();
    if (m == 0) throw ContractError("naive2_forecast: seasonality m must be >= 1");
    if (horizon == 0) throw ContractError("naive2_forecast: horizon must be >= 1");
    if (n < 2 * m || n < 2)
        throw ContractError("naive2_forecast: insample length " + std::to_string(n) +
                            " is shorter than twice the seasonality " + std::to_string(m));

    const double last = insample.back();
    std::vector<double> flat(horizon, last);
    if (m == 1) return flat;

    // 90% significance test on the lag-m autocorrelation.
    double mean = 0.0;
    for (double v : insample) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : insample) var += (v - mean) * (v - mean);
    if (var == 0.0) return flat; // constant series: nothing seasonal about it

    std::vector<double> r(m + 1, 0.0);
    for (std::size_t lag = 1; lag <= m; ++lag) {
        double acc = 0.0;
        for (std::size_t t = lag; t < n; ++t)
            acc += (insample[t] - mean) * (insample[t - lag] - mean);
        r[lag] = acc / var;
    }
    double bands = 1.0;
    for (std::size_t lag = 1; lag < m; ++lag) bands += 2.0 * r[lag] * r[lag];
    const double limit = 1.645 * std::sqrt(bands / static_cast<double>(n));
    if (std::abs(r[m]) <= limit) return flat;

    // Multiplicative classical decomposition: centered moving average (2xMA
    // when m is even), per-phase ratio means normalized to average 1.
    const std::size_t h = m / 2;
    const std::size_t first = h;
    const std::size_t last_t = n - 1 - h;
    std::vector<double> sums(m, 0.0);
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t t = first; t <= last_t; ++t) {
        double ma = 0.0;
        if (m % 2 == 0) {
            ma = 0.5 * insample[t - h] + 0.5 * insample[t + h];
            for (std::size_t j = t - h + 1; j <= t + h - 1; ++j) ma += insample[j];
        } else {
            for (std::size_t j = t - h; j <= t + h; ++j) ma += insample[j];
        }
        ma /= static_cast<double>(m);
        if (ma == 0.0) return flat; // ratio-to-moving-average needs a nonzero level
        sums[t % m] += insample[t] / ma;
        ++counts[t % m];
    }
    std::vector<double> index(m, 0.0);
    double index_mean = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
        if (counts[p] == 0) return flat; // a phase never observed against the trend
        index[p] = sums[p] / static_cast<double>(counts[p]);
        index_mean += index[p];
    }
    index_mean /= static_cast<double>(m);
    if (index_mean == 0.0) return flat;
    for (double& v : index) v /= index_mean;
    for (double v : index)
        if (v == 0.0) return flat; // deseasonalizing would divide by zero

    const double level = insample[n - 1] / index[(n - 1) % m];
    std::vector<double> out(horizon, 0.0);
    for (std::size_t k = 0; k < horizon; ++k) out[k] = level * index[(n + k) % m];
    return out;
}

} // namespace caformer
