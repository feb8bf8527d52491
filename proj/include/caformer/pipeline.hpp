#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "caformer/data.hpp"
#include "caformer/grad_check.hpp"
#include "caformer/run_config.hpp"
#include "caformer/scm.hpp"

namespace caformer {

// What a model run produced: the flat metric values that went into
// metrics.json, plus where that file lives.
struct RunOutcome {
    std::map<std::string, double> metrics;
    std::size_t support = 0;
    std::string metrics_path;
};

// Train + evaluate + emit artifacts (resolved config snapshot, log.jsonl,
// checkpoint, metrics.json, overlay/heatmap plots) under rc.out.
RunOutcome run_training(const RunConfig& rc);

// Evaluate an existing checkpoint (rc.checkpoint) against the configured
// data; writes metrics.json and plots only.
RunOutcome run_evaluation(const RunConfig& rc);

// The four-variant comparison harness: each arm trains in its own
// subdirectory with a shared seed; the comparison table is always written
// (ablation_table.json + table.txt) and echoed to stdout.
RunOutcome run_ablate(const RunConfig& rc);

struct FixtureRules {
    DoCalculusReport chain;        // X -> Z -> Y
    DoCalculusReport fork;         // X <- Z -> Y
    DoCalculusReport disconnected; // no edges
};

struct BackdoorReport {
    std::size_t trials = 0;
    double max_abs_diff = 0.0;
    double tolerance = 1e-12;
    bool equivalence_pass = false;
    FixtureRules fixtures;
};

// Adjustment-vs-surgery equivalence over seeded random confounded triples,
// plus the three do-calculus rule fixtures. Prints a summary; writes
// backdoor_report.json when out_dir is nonempty. scm_file, when given, adds a
// user-supplied model to the equivalence sweep (it must name C, X, T).
BackdoorReport run_verify_backdoor(std::size_t trials, std::uint64_t seed,
                                   const std::string& out_dir, const std::string& scm_file = "");

// Finite-difference check of the full model gradient on a small forecasting
// configuration with randomized parameters. Prints a summary; writes
// gradcheck.json when out_dir is nonempty.
GradCheckReport run_gradcheck_tiny(std::uint64_t seed, double fd_step = 1e-5,
                                   const std::string& out_dir = "");

// Generate a synthetic dataset to CSV (two_class: a directory of series plus
// labels.csv; spiked: data CSV plus an .anomaly.csv flag sidecar).
void run_synth_cmd(const std::string& kind, std::size_t M, std::size_t L, std::uint64_t seed,
                   const SynthParams& sp, const std::string& out_path);

} // namespace caformer
