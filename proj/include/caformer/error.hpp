#pragma once

#include <stdexcept>
#include <string>

namespace caformer {

// Shape mismatches, bad arguments, violated API contracts. Callers that hit
// one of these passed something structurally wrong; the message names the
// operation and the offending shapes/values.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf detected entering or leaving a numeric primitive, or a value left
// the domain a primitive requires (e.g. non-positive row sum in a row
// renormalization). Never silently propagated.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed external input: CSV rows, config files, checkpoints, model text.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace caformer
