#pragma once

#include <functional>
#include <map>
#include <string>

#include "caformer/params.hpp"
#include "caformer/tape.hpp"

namespace caformer {

// Builds a scalar loss on the given tape from the named parameter leaves.
// Must be a pure function of the parameters (fixed data baked in).
using LossBuilder =
    std::function<tape::Var(tape::Tape&, const std::map<std::string, tape::Var>&)>;

struct GradCheckReport {
    std::size_t entries_checked = 0;
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    // Two identical builds produced bitwise-equal losses.
    bool reproducible = false;
    double loss = 0.0;

    bool passed(double tol) const { return reproducible && max_rel_err < tol; }
};

// Compares reverse-mode gradients against central finite differences for every
// entry of every parameter. rel_err = |a - n| / max(1e-8, |a|, |n|).
GradCheckReport grad_check(const LossBuilder& build, const ParamStore& params,
                           double fd_step = 1e-5);

} // namespace caformer
