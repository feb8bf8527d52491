#include "caformer/cli.hpp"

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "caformer/data.hpp"
#include "caformer/error.hpp"
#include "caformer/pipeline.hpp"
#include "caformer/run_config.hpp"

namespace caformer {
namespace {

// Options shared by every run-style subcommand. Dedicated flags are sugar for
// --set and are applied after it, so a flag always wins over --set, which in
// turn wins over the config file.
struct RunArgs {
    std::string config_path;
    std::vector<std::string> sets;      // --set key=value, applied in order
    std::vector<std::string> flag_sets; // from dedicated flags, applied last
};

void add_run_options(CLI::App* sub, RunArgs& a, bool with_task, bool with_checkpoint) {
    sub->add_option("--config", a.config_path,
                    "flat key=value config file ('#' comments allowed)")
        ->check(CLI::ExistingFile);
    sub->add_option("--set", a.sets,
                    "override one config key, e.g. --set model.E=32 (repeatable)");
    auto alias = [&a, sub](const std::string& flag, const std::string& key,
                           const std::string& help) {
        sub->add_option_function<std::string>(
            flag, [&a, key](const std::string& v) { a.flag_sets.push_back(key + "=" + v); },
            help);
    };
    if (with_task)
        alias("--task", "task",
              "forecast|short_forecast|imputation|classification|anomaly");
    alias("--data", "data", "input CSV (one column per series dimension)");
    alias("--synth", "synth", "synthetic dataset: coupled_ar|seasonal|two_class|spiked");
    alias("--out", "out", "output directory for run artifacts");
    alias("--seed", "train.seed", "training seed (init, shuffling, batching)");
    alias("--epochs", "train.epochs", "training epochs");
    alias("--ablation", "ablation", "full|no_dep|no_dyn|no_env");
    alias("--isa", "isa", "kernel selection: auto|scalar|avx2");
    if (with_checkpoint)
        alias("--checkpoint", "checkpoint", "checkpoint file to evaluate");
}

// File -> --set -> dedicated flags; throws on unknown keys or bad values.
RunConfig build_run_config(const RunArgs& a) {
    RunConfig rc;
    if (!a.config_path.empty()) rc = parse_config_file(a.config_path);
    apply_overrides(rc, a.sets);
    apply_overrides(rc, a.flag_sets);
    return rc;
}

// Task subcommands pin tasks: `forecast` keeps either forecasting variant,
// the other three force exactly their own task.
void pin_task(RunConfig& rc, Task t) {
    if (t == Task::long_forecast &&
        (rc.task == Task::long_forecast || rc.task == Task::short_forecast))
        return;
    rc.task = t;
}

enum class RunKind { train, evaluate, ablate };

int run_style(const RunArgs& a, RunKind kind, const Task* pinned) {
    RunConfig rc;
    try {
        rc = build_run_config(a);
        if (pinned) pin_task(rc, *pinned);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    switch (kind) {
        case RunKind::train: run_training(rc); break;
        case RunKind::evaluate: run_evaluation(rc); break;
        case RunKind::ablate: run_ablate(rc); break;
    }
    return 0;
}

bool rules_consistent(const DoCalculusReport& r) {
    for (const RuleReport* rr : {&r.rule1, &r.rule2, &r.rule3})
        if (rr->premise && !(rr->equality_checked && rr->equality_holds)) return false;
    return true;
}

} // namespace

int run_command(int argc, char** argv) {
    CLI::App app{
        "caformer: causal-attention time-series model, desk scale.\n"
        "Run-style subcommands write into the output directory: "
        "resolved_config.txt, log.jsonl, model.ckpt, metrics.json, "
        "truth/prediction overlays (*.svg + *.csv), and per-block "
        "dynamic-adjacency / causal-aligner heatmaps (*.svg)."};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    RunArgs run_args;

    auto* sub_train = app.add_subcommand(
        "train", "train on the configured task and evaluate the test split");
    add_run_options(sub_train, run_args, /*task*/ true, /*checkpoint*/ false);

    auto* sub_eval = app.add_subcommand(
        "evaluate", "re-evaluate a saved checkpoint (no training)");
    add_run_options(sub_eval, run_args, true, true);

    auto* sub_forecast = app.add_subcommand(
        "forecast", "train a forecaster (task pinned to a forecasting variant)");
    add_run_options(sub_forecast, run_args, true, false);

    auto* sub_impute = app.add_subcommand(
        "impute", "train on masked reconstruction (task pinned to imputation)");
    add_run_options(sub_impute, run_args, false, false);

    auto* sub_classify = app.add_subcommand(
        "classify", "train a series classifier (task pinned to classification)");
    add_run_options(sub_classify, run_args, false, false);

    auto* sub_detect = app.add_subcommand(
        "detect", "train an anomaly detector (task pinned to anomaly)");
    add_run_options(sub_detect, run_args, false, false);

    auto* sub_ablate = app.add_subcommand(
        "ablate", "run full + no_dep + no_dyn + no_env into subdirectories "
                  "and print the comparison table");
    add_run_options(sub_ablate, run_args, true, false);

    std::size_t vb_trials = 100;
    std::uint64_t vb_seed = 1;
    std::string vb_out, vb_scm;
    auto* sub_vb = app.add_subcommand(
        "verify-backdoor",
        "check that back-door adjustment equals graph-surgery interventions on "
        "random confounded models, and the three do-calculus rule fixtures");
    sub_vb->add_option("--trials", vb_trials, "random confounded models to test")
        ->capture_default_str();
    sub_vb->add_option("--seed", vb_seed, "RNG seed for model generation")
        ->capture_default_str();
    sub_vb->add_option("--out", vb_out, "directory for backdoor_report.json (optional)");
    sub_vb->add_option("--scm", vb_scm,
                       "extra model JSON (variables C,X,T) to include in the sweep")
        ->check(CLI::ExistingFile);

    std::uint64_t gc_seed = 1;
    double gc_step = 1e-5, gc_tol = 1e-4;
    std::string gc_out;
    auto* sub_gc = app.add_subcommand(
        "gradcheck",
        "compare reverse-mode gradients against central finite differences on "
        "a small forecasting model");
    sub_gc->add_option("--seed", gc_seed, "seed for parameters and data")
        ->capture_default_str();
    sub_gc->add_option("--step", gc_step, "finite-difference step")->capture_default_str();
    sub_gc->add_option("--tol", gc_tol, "max relative error to pass")->capture_default_str();
    sub_gc->add_option("--out", gc_out, "directory for gradcheck.json (optional)");

    std::string sy_kind, sy_out;
    std::size_t sy_M = 4, sy_L = 512;
    std::uint64_t sy_seed = 1;
    SynthParams sy_params;
    auto* sub_synth = app.add_subcommand(
        "synth", "generate a synthetic dataset as CSV");
    sub_synth->add_option("--kind", sy_kind, "coupled_ar|seasonal|two_class|spiked")
        ->required();
    sub_synth->add_option("--M", sy_M, "series dimensions")->capture_default_str();
    sub_synth->add_option("--L", sy_L, "series length")->capture_default_str();
    sub_synth->add_option("--seed", sy_seed, "generator seed")->capture_default_str();
    sub_synth->add_option("--noise", sy_params.noise, "observation noise level")
        ->capture_default_str();
    sub_synth->add_option("--n-series", sy_params.n_series,
                          "two_class: number of series in the corpus")
        ->capture_default_str();
    sub_synth->add_option("--n-anomalies", sy_params.n_anomalies,
                          "spiked: injected point anomalies")
        ->capture_default_str();
    sub_synth->add_option("--out", sy_out,
                          "output CSV path (two_class: output directory)")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (sub_train->parsed()) return run_style(run_args, RunKind::train, nullptr);
        if (sub_eval->parsed()) return run_style(run_args, RunKind::evaluate, nullptr);
        if (sub_ablate->parsed()) return run_style(run_args, RunKind::ablate, nullptr);
        if (sub_forecast->parsed() || sub_impute->parsed() || sub_classify->parsed() ||
            sub_detect->parsed()) {
            Task t = Task::long_forecast;
            if (sub_impute->parsed()) t = Task::imputation;
            if (sub_classify->parsed()) t = Task::classification;
            if (sub_detect->parsed()) t = Task::anomaly;
            return run_style(run_args, RunKind::train, &t);
        }
        if (sub_vb->parsed()) {
            const BackdoorReport rep = run_verify_backdoor(vb_trials, vb_seed, vb_out, vb_scm);
            const bool ok = rep.equivalence_pass && rules_consistent(rep.fixtures.chain) &&
                            rules_consistent(rep.fixtures.fork) &&
                            rules_consistent(rep.fixtures.disconnected);
            return ok ? 0 : 1;
        }
        if (sub_gc->parsed()) {
            const GradCheckReport rep = run_gradcheck_tiny(gc_seed, gc_step, gc_out);
            return rep.passed(gc_tol) ? 0 : 1;
        }
        if (sub_synth->parsed()) {
            run_synth_cmd(sy_kind, sy_M, sy_L, sy_seed, sy_params, sy_out);
            return 0;
        }
    } catch (const ContractError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2; // unreachable with require_subcommand(1)
}

} // namespace caformer
