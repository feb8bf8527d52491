#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "caformer/backbone.hpp"

namespace caformer {

enum class Task { long_forecast, short_forecast, imputation, classification, anomaly };
Task task_from_string(const std::string& s);
const char* task_name(Task t);

struct HeadConfig {
    Task task = Task::long_forecast;
    std::size_t H = 0;            // forecast horizon
    std::size_t num_classes = 0;  // classification
    double quantile = 0.99;       // anomaly threshold percentile
    void validate() const;
};

// Registers the head parameters the task needs ("head.<task>.w"/".b").
void init_head_params(ParamStore& params, const CaformerConfig& cfg, const HeadConfig& head,
                      Rng& rng);

// (N,M,E) -> (M,H): per dimension, flatten the N x E slice, one shared affine.
tape::Var forecast_head(tape::Tape& t, tape::Var s,
                        const std::map<std::string, tape::Var>& params);

// (N,M,E) -> (M,L_in), same flatten-then-affine form.
tape::Var reconstruction_head(tape::Tape& t, tape::Var s,
                              const std::map<std::string, tape::Var>& params);

// (N,M,E) -> (num_classes,): flatten everything, one affine.
tape::Var classification_head(tape::Tape& t, tape::Var s,
                              const std::map<std::string, tape::Var>& params);

// Per-step anomaly score: mean over dimensions of squared reconstruction error.
std::vector<double> anomaly_scores(const NdArray& recon, const NdArray& observed);

// Order-statistic threshold with linear interpolation at rank q*(n-1).
double quantile_threshold(std::vector<double> scores, double quantile);

std::vector<std::uint8_t> threshold_flags(const std::vector<double>& scores, double threshold);

} // namespace caformer
