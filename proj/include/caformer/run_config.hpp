#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caformer/backbone.hpp"
#include "caformer/heads.hpp"
#include "caformer/training.hpp"

namespace caformer {

// Everything one run needs, merged from a flat key=value config file plus
// command-line overrides (overrides win). Unknown keys are rejected.
struct RunConfig {
    // data source: either a CSV path or a synthetic kind
    std::string data_csv;           // "data"
    bool has_header = true;         // "data.header"
    int timestamp_col = -1;         // "data.timestamp_col", -1 = none
    std::string anomaly_csv;        // "data.anomaly_csv": one 0/1 value per line
    std::string synth;              // "synth": coupled_ar|seasonal|two_class|spiked
    std::size_t synth_M = 4;        // "synth.M"
    std::size_t synth_L = 512;      // "synth.L"
    std::uint64_t synth_seed = 1;   // "synth.seed"
    double synth_noise = 0.1;       // "synth.noise"
    std::size_t n_series = 1;       // "synth.n_series"
    std::size_t n_anomalies = 10;   // "synth.n_anomalies"
    std::size_t train_end = 0;      // "split.train_end", 0 = dataset default
    std::size_t val_end = 0;        // "split.val_end"
    double mask_ratio = 0.25;       // "mask.ratio" (imputation)
    std::uint64_t mask_seed = 1;    // "mask.seed"

    // model
    std::size_t L_in = 96;      // "model.L_in"
    std::size_t P = 16;         // "model.P"
    std::size_t S = 8;          // "model.S"
    std::size_t E = 16;         // "model.E"
    std::size_t k = 0;          // "model.k", 0 = match the patch count
    std::size_t blocks = 2;     // "model.blocks"
    double alpha = 0.0;         // "model.alpha", 0 = default
    double beta = 0.0;          // "model.beta", 0 = default
    double eps = 1e-5;          // "model.eps"

    // task
    Task task = Task::long_forecast; // "task"
    std::size_t horizon = 48;        // "task.horizon"
    std::size_t num_classes = 2;     // "task.num_classes"
    double quantile = 0.99;          // "task.quantile"
    bool point_adjust = true;        // "task.point_adjust"
    std::size_t season_m = 1;        // "task.season_m" (short_forecast OWA)

    // training
    std::size_t epochs = 10;      // "train.epochs"
    std::size_t batch_size = 8;   // "train.batch_size"
    double lr = 1e-3;             // "train.lr"
    std::uint64_t seed = 0;       // "train.seed"
    LossKind loss = LossKind::mse;          // "train.loss"
    std::size_t patience = 5;     // "train.patience"
    Ablation ablation = Ablation::full;     // "ablation"

    // run
    std::string out = "run_out";  // "out"
    std::string isa = "auto";     // "isa": auto|scalar|avx2
    std::string checkpoint;       // "checkpoint" (evaluate)

    void set(const std::string& key, const std::string& value); // unknown key -> contract error
    void validate() const;

    CaformerConfig model_config(std::size_t M, std::size_t series_len) const;
    HeadConfig head_config() const;
    TrainConfig train_config() const;

    // Full key=value snapshot in one fixed order (the self-describing record
    // each run writes before doing anything).
    std::string resolved_text() const;
};

// Parses a flat key=value file ('#' comments, blank lines allowed) on top of
// the given defaults.
RunConfig parse_config_file(const std::string& path, RunConfig base = {});
RunConfig parse_config_text(const std::string& text, RunConfig base = {});

// key=value override strings from the command line, applied after the file.
void apply_overrides(RunConfig& rc, const std::vector<std::string>& sets);

} // namespace caformer
