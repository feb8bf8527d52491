#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "caformer/backbone.hpp"
#include "caformer/data.hpp"
#include "caformer/heads.hpp"

namespace caformer {

enum class LossKind { mse, smape, cross_entropy };
LossKind loss_from_string(const std::string& s);
const char* loss_name(LossKind k);

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    Task task = Task::long_forecast;
    Ablation ablation = Ablation::full;
    LossKind loss = LossKind::mse;
    std::size_t patience = 5; // early-stop patience on validation loss
    void validate() const;
};

// Differentiable training loss. With a mask, the mean runs over entries where
// mask==1 only; an all-zero mask is a contract error. cross_entropy expects
// rank-1 logits against a one-hot target and takes no mask.
tape::Var loss_fn(tape::Tape& t, tape::Var pred, tape::Var target,
                  const std::optional<NdArray>& mask, LossKind kind);

// Adam with bias correction. Per-parameter moment buffers are laid out in
// parameter-store order; a zero learning rate leaves parameters untouched.
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step_count = 0;
    std::vector<std::vector<double>> m, v;
    void step(ParamStore& params, const std::map<std::string, NdArray>& grads);
};

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double wall_ms = 0.0; // timing only; not part of the determinism contract
};

struct TrainResult {
    ParamStore params; // snapshot from the best validation epoch
    NormStats norm;    // per-dimension stats the model trained under (empty for classifiers)
    std::vector<EpochRecord> log;
    std::size_t best_epoch = 0;
    double best_val = 0.0;
};

// One forward pass for a normalized input window: backbone then task head.
// recon_mask (1 = hidden) zeroes those inputs before patching. bb_out, when
// given, receives the backbone output (with per-block diagnostics if asked).
tape::Var model_forward(tape::Tape& t, const std::map<std::string, tape::Var>& params,
                        const CaformerConfig& cfg, const HeadConfig& head, Ablation ablation,
                        const NdArray& input_norm, const NdArray* recon_mask = nullptr,
                        BackboneOutput* bb_out = nullptr, bool want_diagnostics = false);

// z-score over the full series, per dimension (classification items normalize
// against themselves; there is no within-series split).
NormStats full_series_stats(const NdArray& values, double eps = 1e-8);

// Train on one series dataset (forecast / imputation / anomaly tasks).
// Deterministic for a fixed seed: init, shuffling and batching all draw from
// it. Non-finite losses or gradients abort with a numeric error naming the
// offending node or parameter.
TrainResult train(const SeriesDataset& ds, const CaformerConfig& cfg, const HeadConfig& head,
                  const TrainConfig& tc);

// Corpus split boundaries (70/10/20): items [0,first) train, [first,second)
// validation, [second,n) test. Shared by the trainer and the evaluator.
std::pair<std::size_t, std::size_t> corpus_split(std::size_t n);

// Train a classifier over a corpus of labelled series (70/10/20 corpus split).
TrainResult train_classifier(const std::vector<SeriesDataset>& corpus, const CaformerConfig& cfg,
                             const HeadConfig& head, const TrainConfig& tc);

} // namespace caformer
