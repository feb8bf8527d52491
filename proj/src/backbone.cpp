#include "caformer/backbone.hpp"

#include <cmath>

namespace caformer {

namespace {

using tape::Tape;
using tape::Var;

std::string blk(std::size_t b, const char* rest) {
    return "block" + std::to_string(b) + "." + rest;
}

Var param(const std::map<std::string, Var>& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("backbone: missing parameter '" + name + "'");
    return it->second;
}

// One scaled-dot-product self-attention stage over the middle axis of a
// (B, R, E) tensor, with residual and standardization over E. Returns the
// post-residual tensor; weights_out receives the (B, R, R) attention rows.
Var attention_stage(Tape& t, Var x, const std::map<std::string, Var>& params,
                    const std::string& prefix, double eps, Var* weights_out) {
    const std::size_t E = x.shape().back();
    Var q = t.affine(x, param(params, prefix + ".wq"), param(params, prefix + ".bq"));
    // No key bias: shifting every key by a constant adds the same q_i.b to each
    // score in a row, which row-softmax cancels, so such a bias could never
    // receive gradient.
    Var k = t.linear(x, param(params, prefix + ".wk"));
    Var v = t.affine(x, param(params, prefix + ".wv"), param(params, prefix + ".bv"));
    Var scores = t.scale(t.matmul(q, t.permute(k, {0, 2, 1})),
                         1.0 / std::sqrt(static_cast<double>(E)));
    Var w = t.softmax_last(scores);
    if (weights_out) *weights_out = w;
    Var mixed = t.matmul(w, v);
    return t.standardize_last(t.add(x, mixed), eps);
}

// Two sequential stages: over dimensions within each patch, then over patches
// within each dimension. Same-time-step points are never attended across
// patches because stage 2 sees one dimension at a time.
Var dependency_learner(Tape& t, Var i0, const CaformerConfig& cfg,
                       const std::map<std::string, Var>& params, std::size_t b,
                       BlockDiagnostics* diag) {
    Var w_dim, w_patch;
    Var s1 = attention_stage(t, i0, params, blk(b, "dep.dim"), cfg.eps, &w_dim); // (N,M,E)
    Var s1p = t.permute(s1, {1, 0, 2});                                          // (M,N,E)
    Var s2 = attention_stage(t, s1p, params, blk(b, "dep.patch"), cfg.eps, &w_patch);
    Var i_de = t.permute(s2, {1, 0, 2}); // (N,M,E)
    if (diag) {
        diag->attn_dim = w_dim.value();
        diag->attn_patch = w_patch.value();
    }
    return i_de;
}

// z_g = FC(mean-pool over E), A_d = renormalized softmax of its per-patch Gram
// matrix, D = A_d . I_de.
Var dynamic_learner(Tape& t, Var i_de, const CaformerConfig& cfg,
                    const std::map<std::string, Var>& params, std::size_t b,
                    BlockDiagnostics* diag) {
    Var pooled = t.mean_last_keepdim(i_de); // (N,M,1)
    Var z_g = t.affine(pooled, param(params, blk(b, "dyn.pool.w")),
                       param(params, blk(b, "dyn.pool.b"))); // (N,M,1)
    Var gram = t.matmul(z_g, t.permute(z_g, {0, 2, 1}));     // (N,M,M)
    Var a_d = t.renorm_rows_l1(
        t.softmax_last(t.scale(gram, 1.0 / std::sqrt(cfg.alpha_resolved()))));
    Var d = t.matmul(a_d, i_de); // (N,M,E)
    if (diag) diag->a_d = a_d.value();
    return d;
}

struct EnvOut {
    Var c;    // (N,M,E)
    Var h_ce; // (k,k)
};

// Environment path: affine+ReLU feature map, an elementwise scale/shift
// sandwich around a second ReLU, token projection, Gram softmax, causal mask.
EnvOut environment_learner(Tape& t, Var i_de, const CaformerConfig& cfg,
                           const std::map<std::string, Var>& params, std::size_t b,
                           BlockDiagnostics* diag) {
    Var s_e = t.relu(t.affine(i_de, param(params, blk(b, "env.fe.w")),
                              param(params, blk(b, "env.fe.b"))));
    Var c = t.scale_shift_last(
        t.relu(t.scale_shift_last(s_e, param(params, blk(b, "env.alpha1")),
                                  param(params, blk(b, "env.gamma1")))),
        param(params, blk(b, "env.alpha2")), param(params, blk(b, "env.gamma2"))); // (N,M,E)

    const std::size_t N = c.shape()[0], E = c.shape()[2];
    Var pooled = t.reshape(t.mean_last_keepdim(t.permute(c, {0, 2, 1})), Shape{N, E}); // (N,E)
    Var resampled = t.permute(
        t.linear(t.permute(pooled, {1, 0}), param(params, blk(b, "env.proj.resample"))),
        {1, 0}); // (k,E)
    Var tokens = t.affine(resampled, param(params, blk(b, "env.proj.w")),
                          param(params, blk(b, "env.proj.b"))); // (k,E)
    Var gram = t.matmul(tokens, t.permute(tokens, {1, 0}));     // (k,k)
    Var h_e = t.renorm_rows_l1(
        t.softmax_last(t.scale(gram, 1.0 / std::sqrt(cfg.beta_resolved()))));

    NdArray upper = NdArray::zeros({cfg.k, cfg.k});
    for (std::size_t i = 0; i < cfg.k; ++i)
        for (std::size_t j = i + 1; j < cfg.k; ++j) upper.at({i, j}) = 1.0;
    Var h_ce = t.masked_fill(h_e, upper, 0.0);
    if (diag) {
        diag->c = c.value();
        diag->h_e = h_e.value();
        diag->h_ce = h_ce.value();
    }
    return {c, h_ce};
}

// F = FC(concat(D, C, I_de)); resample N->k, mix by H_ce, resample back;
// T = standardize; S = T + I_de.
Var intervene_fuse(Tape& t, Var d, Var c, Var i_de, Var h_ce, const CaformerConfig& cfg,
                   const std::map<std::string, Var>& params, std::size_t b,
                   BlockDiagnostics* diag) {
    const std::size_t N = i_de.shape()[0], M = i_de.shape()[1], E = i_de.shape()[2];
    Var f = t.affine(t.concat_last({d, c, i_de}), param(params, blk(b, "fuse.w")),
                     param(params, blk(b, "fuse.b"))); // (N,M,E)
    Var down = f;
    if (cfg.k != N)
        down = t.permute(t.linear(t.permute(f, {1, 2, 0}), param(params, blk(b, "fuse.down"))),
                         {2, 0, 1}); // (k,M,E)
    Var mixed = t.reshape(t.matmul(h_ce, t.reshape(down, Shape{cfg.k, M * E})),
                          Shape{cfg.k, M, E});
    Var up = mixed;
    if (cfg.k != N)
        up = t.permute(t.linear(t.permute(mixed, {1, 2, 0}), param(params, blk(b, "fuse.up"))),
                       {2, 0, 1}); // (N,M,E)
    Var t_path = t.standardize_last(up, cfg.eps);
    Var s = t.add(t_path, i_de); // the block residual: exactly one addition
    if (diag) {
        diag->t = t_path.value();
        diag->s_temporal = s.value();
    }
    return s;
}

} // namespace

std::size_t CaformerConfig::n_patches() const { return patch_count(L_in, P, S); }

void CaformerConfig::validate() const {
    if (M < 1 || L_in < 1) throw ContractError("CaformerConfig: M and L_in must be set");
    if (E < 1 || blocks < 1 || k < 1)
        throw ContractError("CaformerConfig: E, blocks, k must be >= 1");
    if (!(eps > 0.0)) throw ContractError("CaformerConfig: eps must be positive");
    patch_count(L_in, P, S); // validates P/S bounds against L_in
}

Ablation ablation_from_string(const std::string& s) {
    if (s == "full") return Ablation::full;
    if (s == "no_dep") return Ablation::no_dep;
    if (s == "no_dyn") return Ablation::no_dyn;
    if (s == "no_env") return Ablation::no_env;
    throw ContractError("unknown ablation '" + s + "' (full|no_dep|no_dyn|no_env)");
}

const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::full: return "full";
        case Ablation::no_dep: return "no_dep";
        case Ablation::no_dyn: return "no_dyn";
        case Ablation::no_env: return "no_env";
    }
    return "?";
}

NdArray causal_mask(const NdArray& h) {
    if (h.rank() != 2 || h.dim(0) != h.dim(1))
        throw ContractError("causal_mask: want a square matrix, got " + shape_string(h.shape()));
    NdArray out = h;
    const std::size_t k = h.dim(0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) out.at({i, j}) = 0.0;
    return out;
}

void init_backbone_params(ParamStore& params, const CaformerConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t N = cfg.n_patches(), E = cfg.E, P = cfg.P, k = cfg.k;
    params.add("embed.w", init_weight(rng, P, E));
    params.add("embed.b", NdArray::zeros({E}));
    {
        const double bound = 1.0 / std::sqrt(static_cast<double>(E));
        std::vector<double> pos(N * E);
        for (double& v : pos) v = rng.uniform(-bound, bound);
        params.add("embed.pos", NdArray({N, E}, std::move(pos)));
    }
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        for (const char* stage : {"dep.dim", "dep.patch"}) {
            for (const char* w : {"wq", "wk", "wv"})
                params.add(blk(b, stage) + "." + w, init_weight(rng, E, E));
            for (const char* bias : {"bq", "bv"})
                params.add(blk(b, stage) + "." + bias, NdArray::zeros({E}));
        }
        params.add(blk(b, "dyn.pool.w"), init_weight(rng, 1, 1));
        params.add(blk(b, "dyn.pool.b"), NdArray::zeros({1}));
        params.add(blk(b, "env.fe.w"), init_weight(rng, E, E));
        params.add(blk(b, "env.fe.b"), NdArray::zeros({E}));
        params.add(blk(b, "env.alpha1"), NdArray::full({E}, 1.0));
        params.add(blk(b, "env.gamma1"), NdArray::zeros({E}));
        params.add(blk(b, "env.alpha2"), NdArray::full({E}, 1.0));
        params.add(blk(b, "env.gamma2"), NdArray::zeros({E}));
        params.add(blk(b, "env.proj.resample"), init_weight(rng, N, k));
        params.add(blk(b, "env.proj.w"), init_weight(rng, E, E));
        params.add(blk(b, "env.proj.b"), NdArray::zeros({E}));
        params.add(blk(b, "fuse.w"), init_weight(rng, 3 * E, E));
        params.add(blk(b, "fuse.b"), NdArray::zeros({E}));
        if (k != N) {
            params.add(blk(b, "fuse.down"), init_weight(rng, N, k));
            params.add(blk(b, "fuse.up"), init_weight(rng, k, N));
        }
    }
}

BackboneOutput backbone_forward(Tape& t, Var patches_nmp, const CaformerConfig& cfg,
                                const std::map<std::string, Var>& params, Ablation ablation,
                                bool want_diagnostics) {
    cfg.validate();
    const Shape& ps = patches_nmp.shape();
    const std::size_t N = cfg.n_patches();
    if (ps.size() != 3 || ps[0] != N || ps[1] != cfg.M || ps[2] != cfg.P)
        throw ContractError("backbone_forward: patches must be (N,M,P) = (" + std::to_string(N) +
                            "," + std::to_string(cfg.M) + "," + std::to_string(cfg.P) +
                            "), got " + shape_string(ps));

    Var x = t.affine(patches_nmp, param(params, "embed.w"), param(params, "embed.b"));
    x = t.add_bcast_mid(x, param(params, "embed.pos")); // I0 (N,M,E)

    BackboneOutput out;
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        BlockDiagnostics diag;
        BlockDiagnostics* dp = want_diagnostics ? &diag : nullptr;

        Var i_de = ablation == Ablation::no_dep
                       ? x
                       : dependency_learner(t, x, cfg, params, b, dp);
        if (dp) dp->i_de = i_de.value();

        Var d = ablation == Ablation::no_dyn ? i_de : dynamic_learner(t, i_de, cfg, params, b, dp);
        if (dp && ablation == Ablation::no_dyn) {
            NdArray ident = NdArray::zeros({i_de.shape()[0], cfg.M, cfg.M});
            for (std::size_t n = 0; n < i_de.shape()[0]; ++n)
                for (std::size_t m = 0; m < cfg.M; ++m) ident.at({n, m, m}) = 1.0;
            dp->a_d = std::move(ident);
        }

        if (ablation == Ablation::no_env) {
            // T := 0, so the block reduces to its residual.
            Var t_zero = t.constant(NdArray::zeros(i_de.shape()));
            Var s = t.add(t_zero, i_de);
            if (dp) {
                dp->t = t_zero.value();
                dp->s_temporal = s.value();
            }
            x = s;
        } else {
            EnvOut env = environment_learner(t, i_de, cfg, params, b, dp);
            x = intervene_fuse(t, d, env.c, i_de, env.h_ce, cfg, params, b, dp);
        }
        if (want_diagnostics) out.blocks.push_back(std::move(diag));
    }
    out.s_temporal = x;
    return out;
}

BackboneOutput backbone_forward_series(Tape& t, const NdArray& series, const CaformerConfig& cfg,
                                       const std::map<std::string, Var>& params, Ablation ablation,
                                       bool want_diagnostics) {
    if (series.rank() != 2 || series.dim(0) != cfg.M || series.dim(1) != cfg.L_in)
        throw ContractError("backbone_forward_series: series must be (M,L_in) = (" +
                            std::to_string(cfg.M) + "," + std::to_string(cfg.L_in) + "), got " +
                            shape_string(series.shape()));
    PatchSet ps = make_patches(series, cfg.P, cfg.S);
    in_patch_normalize(ps, cfg.eps);
    Var patches = t.constant(permute_nd(ps.patches, {2, 0, 1})); // (M,P,N) -> (N,M,P)
    return backbone_forward(t, patches, cfg, params, ablation, want_diagnostics);
}

NdArray permute_nd(const NdArray& a, const std::vector<std::size_t>& axes) {
    const Shape& s = a.shape();
    if (axes.size() != s.size()) throw ContractError("permute_nd: axes count != rank");
    std::vector<bool> seen(axes.size(), false);
    for (std::size_t ax : axes) {
        if (ax >= axes.size() || seen[ax]) throw ContractError("permute_nd: bad permutation");
        seen[ax] = true;
    }
    const Shape strides = row_major_strides(s);
    Shape out_shape(s.size());
    Shape gather(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        out_shape[i] = s[axes[i]];
        gather[i] = strides[axes[i]];
    }
    NdArray out = NdArray::zeros(out_shape);
    std::vector<std::size_t> idx(s.size(), 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < out.size(); ++flat) {
        out[flat] = a[src];
        for (std::size_t ax = s.size(); ax-- > 0;) {
            src += gather[ax];
            if (++idx[ax] < out_shape[ax]) break;
            src -= gather[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    return out;
}

} // namespace caformer
