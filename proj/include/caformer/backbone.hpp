#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "caformer/nd_array.hpp"
#include "caformer/params.hpp"
#include "caformer/patching.hpp"
#include "caformer/rng.hpp"
#include "caformer/tape.hpp"

namespace caformer {

struct CaformerConfig {
    std::size_t M = 0;    // input dimensions
    std::size_t L_in = 0; // input window length
    std::size_t P = 16;   // patch length
    std::size_t S = 8;    // patch stride
    std::size_t E = 16;   // embedding width
    std::size_t k = 256;  // aligning-matrix size
    std::size_t blocks = 3;
    double alpha = 0.0; // dynamic-learner softmax scale; <=0 picks the default
    double beta = 0.0;  // environment softmax scale; <=0 picks the default
    double eps = 1e-5;  // standardization denominator floor

    std::size_t n_patches() const; // patch_count(L_in, P, S)
    // Scale defaults follow the sqrt(d) attention convention: the dynamic
    // learner compares width-1 pooled tokens, the environment learner
    // width-E projected tokens.
    double alpha_resolved() const { return alpha > 0.0 ? alpha : 1.0; }
    double beta_resolved() const { return beta > 0.0 ? beta : static_cast<double>(E); }
    void validate() const;
};

// Component switches: bypass the dependency learner, pin the dynamic mixing
// matrix to identity, or zero the fused environment path.
enum class Ablation { full, no_dep, no_dyn, no_env };
Ablation ablation_from_string(const std::string& s);
const char* ablation_name(Ablation a);

// Per-block tensors recorded for tests and heatmaps. Attention tensors are
// empty for components a switch disabled.
struct BlockDiagnostics {
    NdArray attn_dim;    // (N, M, M) stage-1 weights (over dimensions)
    NdArray attn_patch;  // (M, N, N) stage-2 weights (over patches)
    NdArray a_d;         // (N, M, M) dynamic mixing matrix
    NdArray h_e;         // (k, k) alignment before masking
    NdArray h_ce;        // (k, k) masked alignment
    NdArray c;           // (N, M, E) environment representation
    NdArray i_de;        // (N, M, E) block input after the dependency learner
    NdArray t;           // (N, M, E) fused path before the residual
    NdArray s_temporal;  // (N, M, E) block output
};

struct BackboneOutput {
    tape::Var s_temporal; // (N, M, E) final block output, on the tape
    std::vector<BlockDiagnostics> blocks;
};

// Zero the strict upper triangle: future positions cannot influence history.
NdArray causal_mask(const NdArray& h);

// Registers every backbone parameter ("embed.*", "block<i>.*"). Weights are
// fan-in-scaled uniform; biases and the environment shifts start at zero, the
// environment scales at one.
void init_backbone_params(ParamStore& params, const CaformerConfig& cfg, Rng& rng);

// Forward over an already-embedded patch tensor: patches_nmp is a (N, M, P)
// tape node of in-patch-normalized values.
BackboneOutput backbone_forward(tape::Tape& t, tape::Var patches_nmp, const CaformerConfig& cfg,
                                const std::map<std::string, tape::Var>& params,
                                Ablation ablation = Ablation::full,
                                bool want_diagnostics = false);

// Convenience: series (M, L_in) -> patching -> in-patch normalization ->
// forward. The series enters the tape as a constant.
BackboneOutput backbone_forward_series(tape::Tape& t, const NdArray& series,
                                       const CaformerConfig& cfg,
                                       const std::map<std::string, tape::Var>& params,
                                       Ablation ablation = Ablation::full,
                                       bool want_diagnostics = false);

// Eager permute for test plumbing and patch-layout conversion.
NdArray permute_nd(const NdArray& a, const std::vector<std::size_t>& axes);

} // namespace caformer
