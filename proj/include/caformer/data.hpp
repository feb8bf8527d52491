#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "caformer/nd_array.hpp"

namespace caformer {

// One multivariate series with split boundaries and an optional task payload.
// Splits are step indices: train [0, train_end), val [train_end, val_end),
// test [val_end, L).
struct SeriesDataset {
    NdArray values; // (M, L)
    std::vector<std::string> dim_names;
    std::size_t train_end = 0;
    std::size_t val_end = 0;

    // Task payloads (at most one is meaningful per dataset).
    std::size_t horizon = 0;              // forecast
    std::optional<NdArray> mask;          // imputation, (M, L), 1 = masked
    std::optional<int> label;             // classification, one label per series
    std::vector<std::uint8_t> anomaly;    // per-step truth flags, size L when present

    std::size_t M() const { return values.dim(0); }
    std::size_t L() const { return values.dim(1); }
    void validate() const;
};

enum class Split { train, val, test };
const char* split_name(Split s);

// One training/evaluation instance. Values are raw (un-normalized); the
// training pipeline normalizes and applies masks downstream.
struct Window {
    NdArray input;   // (M, L_in)
    NdArray target;  // (M, H) forecast / (M, L_in) reconstruction
    NdArray mask;    // (M, L_in), 1 = masked; empty when the task has no mask
    std::size_t t0 = 0; // absolute start step of the input
};

// Sliding forecast windows wholly inside one split segment; target of length
// H >= 1 immediately follows the input. Short segments yield an empty vector
// (with a stderr warning), never an error.
std::vector<Window> make_windows(const SeriesDataset& ds, Split split, std::size_t L_in,
                                 std::size_t H, std::size_t stride);

// Reconstruction windows: target == input span; mask sliced when present.
std::vector<Window> make_recon_windows(const SeriesDataset& ds, Split split, std::size_t L_in,
                                       std::size_t stride);

// ------------------------------------------------------------------- csv i/o

// Rows are time steps, columns are dimensions. Optional header row; optional
// timestamp column (dropped). Splits default to 70/10/20.
SeriesDataset load_csv(const std::string& path, bool has_header,
                       std::optional<std::size_t> timestamp_col = std::nullopt);
void save_csv(const std::string& path, const SeriesDataset& ds);

// Mask file: CSV of 0/1 with the same layout as the data file.
NdArray load_mask_csv(const std::string& path, std::size_t M, std::size_t L);

// ------------------------------------------------------------- normalization

// Per-dimension z-score statistics from the train split only.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> sigma; // guarded: max(std, eps)
};

NormStats train_split_stats(const SeriesDataset& ds, double eps = 1e-8);
NdArray normalize_rows(const NdArray& values, const NormStats& stats);
NdArray denormalize_rows(const NdArray& values, const NormStats& stats);

// --------------------------------------------------------------------- masks

// Copy of ds with exactly round(ratio*M*L) entries masked uniformly at random.
SeriesDataset apply_imputation_mask(const SeriesDataset& ds, double ratio, std::uint64_t seed);

// ----------------------------------------------------------------- synthetic

struct SynthParams {
    std::size_t n_series = 1;     // two_class: population size
    double noise = 0.1;           // observation noise level
    std::size_t n_anomalies = 10; // spiked: injected point anomalies
};

// Deterministic synthetic datasets:
//   coupled_ar — lagged cross-dimension AR structure driven by a shared
//                low-frequency confounder channel
//   seasonal   — sinusoidal seasonality per dimension
//   two_class  — two frequency-distinct populations, label = series class
//   spiked     — smooth base with labelled point anomalies in the test span
// Returns one dataset, except two_class which returns n_series of them.
std::vector<SeriesDataset> synth_generate(const std::string& kind, std::size_t M, std::size_t L,
                                          std::uint64_t seed, const SynthParams& params = {});

} // namespace caformer
