#include "caformer/heads.hpp"

#include <algorithm>
#include <cmath>

#include "caformer/error.hpp"

namespace caformer {

Task task_from_string(const std::string& s) {
    if (s == "forecast" || s == "long_forecast") return Task::long_forecast;
    if (s == "short_forecast") return Task::short_forecast;
    if (s == "imputation") return Task::imputation;
    if (s == "classification") return Task::classification;
    if (s == "anomaly") return Task::anomaly;
    throw ContractError("unknown task: '" + s + "'");
}

const char* task_name(Task t) {
    switch (t) {
        case Task::long_forecast: return "long_forecast";
        case Task::short_forecast: return "short_forecast";
        case Task::imputation: return "imputation";
        case Task::classification: return "classification";
        case Task::anomaly: return "anomaly";
    }
    throw ContractError("task_name: bad enum value");
}

void HeadConfig::validate() const {
    const bool forecasting = task == Task::long_forecast || task == Task::short_forecast;
    if (forecasting && H == 0) throw ContractError("head config: forecast task needs H >= 1");
    if (task == Task::classification && num_classes < 2)
        throw ContractError("head config: classification needs num_classes >= 2");
    if (task == Task::anomaly && !(quantile > 0.0 && quantile < 1.0))
        throw ContractError("head config: quantile must lie in (0,1)");
}

void init_head_params(ParamStore& params, const CaformerConfig& cfg, const HeadConfig& head,
                      Rng& rng) {
    head.validate();
    const std::size_t N = cfg.n_patches();
    const std::size_t flat = N * cfg.E;
    switch (head.task) {
        case Task::long_forecast:
        case Task::short_forecast:
            params.add("head.forecast.w", init_weight(rng, flat, head.H));
            params.add("head.forecast.b", NdArray::zeros({head.H}));
            break;
        case Task::imputation:
        case Task::anomaly:
            params.add("head.recon.w", init_weight(rng, flat, cfg.L_in));
            params.add("head.recon.b", NdArray::zeros({cfg.L_in}));
            break;
        case Task::classification:
            params.add("head.cls.w", init_weight(rng, N * cfg.M * cfg.E, head.num_classes));
            params.add("head.cls.b", NdArray::zeros({head.num_classes}));
            break;
    }
}

namespace {

// (N,M,E) -> (M, N*E) so each dimension owns one flattened row.
tape::Var flatten_per_dim(tape::Tape& t, tape::Var s) {
    const Shape& sh = s.shape();
    if (sh.size() != 3)
        throw ContractError("head: expected rank-3 backbone output, got " + shape_string(sh));
    const std::size_t N = sh[0], M = sh[1], E = sh[2];
    tape::Var by_dim = t.permute(s, {1, 0, 2}); // (M,N,E)
    return t.reshape(by_dim, {M, N * E});
}

tape::Var named(const std::map<std::string, tape::Var>& params, const std::string& key) {
    auto it = params.find(key);
    if (it == params.end()) throw ContractError("head: missing parameter '" + key + "'");
    return it->second;
}

} // namespace

tape::Var forecast_head(tape::Tape& t, tape::Var s,
                        const std::map<std::string, tape::Var>& params) {
    tape::Var flat = flatten_per_dim(t, s);
    return t.affine(flat, named(params, "head.forecast.w"), named(params, "head.forecast.b"));
}

tape::Var reconstruction_head(tape::Tape& t, tape::Var s,
                              const std::map<std::string, tape::Var>& params) {
    tape::Var flat = flatten_per_dim(t, s);
    return t.affine(flat, named(params, "head.recon.w"), named(params, "head.recon.b"));
}

tape::Var classification_head(tape::Tape& t, tape::Var s,
                              const std::map<std::string, tape::Var>& params) {
    const Shape& sh = s.shape();
    if (sh.size() != 3)
        throw ContractError("head: expected rank-3 backbone output, got " + shape_string(sh));
    tape::Var flat = t.reshape(s, {sh[0] * sh[1] * sh[2]});
    return t.affine(flat, named(params, "head.cls.w"), named(params, "head.cls.b"));
}

std::vector<double> anomaly_scores(const NdArray& recon, const NdArray& observed) {
    require_same_shape(recon, observed, "anomaly_scores");
    if (recon.shape().size() != 2)
        throw ContractError("anomaly_scores: expected (dims, steps), got " +
                            shape_string(recon.shape()));
    const std::size_t M = recon.shape()[0];
    const std::size_t T = recon.shape()[1];
    std::vector<double> scores(T, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t s = 0; s < T; ++s) {
            const double d = recon.data()[m * T + s] - observed.data()[m * T + s];
            scores[s] += d * d;
        }
    }
    for (double& v : scores) v /= static_cast<double>(M);
    return scores;
}

double quantile_threshold(std::vector<double> scores, double quantile) {
    if (scores.empty()) throw ContractError("quantile_threshold: no scores");
    if (!(quantile > 0.0 && quantile < 1.0))
        throw ContractError("quantile_threshold: quantile must lie in (0,1)");
    std::sort(scores.begin(), scores.end());
    const double h = quantile * static_cast<double>(scores.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= scores.size()) return scores.back();
    const double frac = h - static_cast<double>(lo);
    return scores[lo] + frac * (scores[lo + 1] - scores[lo]);
}

std::vector<std::uint8_t> threshold_flags(const std::vector<double>& scores, double threshold) {
    std::vector<std::uint8_t> flags(scores.size(), 0);
    for (std::size_t i = 0; i < scores.size(); ++i) flags[i] = scores[i] > threshold ? 1 : 0;
    return flags;
}

} // namespace caformer
