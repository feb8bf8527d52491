#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "caformer/nd_array.hpp"

namespace caformer::tape {

class Tape;

// Handle to a node on a tape. Cheap to copy; invalidated when the tape dies.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const NdArray& value() const;
    const Shape& shape() const;
};

// Record-then-reverse automatic differentiation over NdArray, f64 throughout.
// A forward pass appends nodes (creation order is topological); backward walks
// the list once in reverse, so every node's VJP runs exactly once. Every value
// produced by a primitive is checked finite on the spot — NaN/Inf raises
// NumericError naming the primitive instead of propagating.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // --- graph inputs -------------------------------------------------------
    // Named differentiable input (gradient tracked iff value.requires_grad).
    Var leaf(const std::string& name, const NdArray& value);
    // Anonymous non-differentiable input.
    Var constant(NdArray value);

    // --- elementwise --------------------------------------------------------
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var abs(Var a);
    Var relu(Var a);

    // --- linear algebra -----------------------------------------------------
    // Batched matrix product: shapes (B..., R, K) x (B..., K, C) with equal
    // leading dims -> (B..., R, C).
    Var matmul(Var a, Var b);
    // x (..., K) times w (K, C) -> (..., C); weights shared over leading dims.
    Var linear(Var x, Var w);
    // linear plus bias b (C) broadcast over rows.
    Var affine(Var x, Var w, Var b);

    // --- shape --------------------------------------------------------------
    Var permute(Var a, const std::vector<std::size_t>& axes);
    Var reshape(Var a, Shape shape);
    Var concat_last(const std::vector<Var>& parts);

    // --- row-wise (over the last axis) --------------------------------------
    Var softmax_last(Var a);
    Var log_softmax_last(Var a);
    // Divide each row by its sum; requires strictly positive row sums.
    Var renorm_rows_l1(Var a);
    Var mean_last_keepdim(Var a);
    // Per-row standardization: (x - mean) / max(std, eps). Population std.
    Var standardize_last(Var a, double eps = 1e-5);

    // --- broadcasting / masking ---------------------------------------------
    // out = a where mask==0, fill where mask!=0. mask shape == a shape.
    Var masked_fill(Var a, const NdArray& mask, double fill);
    // out[..., e] = x[..., e] * alpha[e] + gamma[e]; alpha, gamma shape (E).
    Var scale_shift_last(Var x, Var alpha, Var gamma);
    // x (A, B, C) + t (A, C) broadcast over the middle axis.
    Var add_bcast_mid(Var x, Var t);

    // --- reductions to scalar (shape {1}) ------------------------------------
    Var mean_all(Var a);
    Var sum_all(Var a);

    // --- execution ----------------------------------------------------------
    const NdArray& value(Var v) const;

    // Reverse pass from a scalar loss. Returns name -> gradient for every
    // differentiable named leaf; leaves the loss doesn't reach get zeros.
    // May be called repeatedly; gradients are reset first, so repeat calls
    // agree bitwise.
    std::map<std::string, NdArray> backward(Var loss);

    // Gradient of any node after backward (zeros if the node was not reached).
    NdArray grad_of(Var v) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        NdArray value;
        std::vector<double> grad; // engaged iff needs_grad
        bool needs_grad = false;
        bool is_leaf = false;
        std::string name;                // named leaves only
        std::function<void(Tape&)> vjp;  // empty for inputs
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;

    Var push(NdArray value, bool needs_grad, std::function<void(Tape&)> vjp, const char* op);
    Node& node(std::size_t id) { return nodes_[id]; }
    const Node& node(std::size_t id) const { return nodes_[id]; }
    const Node& check(Var v, const char* op) const;
    double* grad_ptr(std::size_t id);

    friend struct Var;
};

} // namespace caformer::tape
