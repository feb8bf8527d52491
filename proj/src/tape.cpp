#include "caformer/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

#include "caformer/kernels.hpp"

namespace caformer::tape {
namespace {

// rows x cols view of a tensor treated as (leading..., last).
struct RowView {
    std::size_t rows;
    std::size_t cols;
};

RowView row_view(const Shape& shape, const char* op) {
    if (shape.empty()) throw ContractError(std::string(op) + ": rank-0 tensor");
    RowView v{1, shape.back()};
    for (std::size_t i = 0; i + 1 < shape.size(); ++i) v.rows *= shape[i];
    return v;
}

void mat_transpose(const double* a, std::size_t r, std::size_t c, double* out) {
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
}

// out[idx] = in[axes-mapped idx]; generic strided gather over the out shape.
void permute_copy(const double* in, const Shape& in_shape,
                  const std::vector<std::size_t>& axes, double* out) {
    const Shape in_strides = row_major_strides(in_shape);
    const std::size_t rank = in_shape.size();
    Shape out_shape(rank), gather(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = in_shape[axes[i]];
        gather[i] = in_strides[axes[i]];
    }
    const std::size_t total = shape_product(in_shape);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < total; ++flat) {
        out[flat] = in[src];
        for (std::size_t ax = rank; ax-- > 0;) {
            src += gather[ax];
            if (++idx[ax] < out_shape[ax]) break;
            src -= gather[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
}

std::vector<std::size_t> inverse_axes(const std::vector<std::size_t>& axes) {
    std::vector<std::size_t> inv(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) inv[axes[i]] = i;
    return inv;
}

// Batched matmul shape split: (B..., R, K) -> batch count and trailing dims.
struct MatShape {
    std::size_t batch;
    std::size_t r;
    std::size_t c;
};

MatShape mat_shape(const Shape& s, const char* op) {
    if (s.size() < 2) throw ContractError(std::string(op) + ": operand rank < 2");
    MatShape m{1, s[s.size() - 2], s[s.size() - 1]};
    for (std::size_t i = 0; i + 2 < s.size(); ++i) m.batch *= s[i];
    return m;
}

} // namespace

const NdArray& Var::value() const { return tape->value(*this); }
const Shape& Var::shape() const { return tape->value(*this).shape(); }

const Tape::Node& Tape::check(Var v, const char* op) const {
    if (v.tape != this || v.id >= nodes_.size())
        throw ContractError(std::string(op) + ": Var does not belong to this tape");
    return nodes_[v.id];
}

double* Tape::grad_ptr(std::size_t id) { return nodes_[id].grad.data(); }

Var Tape::push(NdArray value, bool needs_grad, std::function<void(Tape&)> vjp, const char* op) {
    require_finite(value, op);
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.grad.assign(n.value.size(), 0.0);
    n.vjp = needs_grad ? std::move(vjp) : nullptr;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(const std::string& name, const NdArray& value) {
    if (name.empty()) throw ContractError("leaf: empty name");
    for (const Node& n : nodes_)
        if (n.is_leaf && n.name == name)
            throw ContractError("leaf: duplicate name '" + name + "'");
    Var v = push(value, value.requires_grad, nullptr, "leaf");
    nodes_[v.id].is_leaf = true;
    nodes_[v.id].name = name;
    return v;
}

Var Tape::constant(NdArray value) {
    Var v = push(std::move(value), false, nullptr, "constant");
    nodes_[v.id].is_leaf = true;
    return v;
}

// ---------------------------------------------------------------- elementwise

Var Tape::add(Var a, Var b) {
    const Node& na = check(a, "add");
    const Node& nb = check(b, "add");
    require_same_shape(na.value, nb.value, "add");
    std::vector<double> buf(na.value.size());
    kern::ops().add(na.value.data(), nb.value.data(), buf.data(), buf.size());
    const std::size_t self = nodes_.size(), ia = a.id, ib = b.id;
    return push(NdArray(na.value.shape(), std::move(buf)), na.needs_grad || nb.needs_grad,
                [self, ia, ib](Tape& t) {
                    const double* g = t.node(self).grad.data();
                    const std::size_t n = t.node(self).grad.size();
                    if (t.node(ia).needs_grad) kern::ops().axpy(1.0, g, t.grad_ptr(ia), n);
                    if (t.node(ib).needs_grad) kern::ops().axpy(1.0, g, t.grad_ptr(ib), n);
                },
                "add");
}

Var Tape::sub(Var a, Var b) {
    const Node& na = check(a, "sub");
    const Node& nb = check(b, "sub");
    require_same_shape(na.value, nb.value, "sub");
    std::vector<double> buf(na.value.size());
    kern::ops().sub(na.value.data(), nb.value.data(), buf.data(), buf.size());
    const std::size_t self = nodes_.size(), ia = a.id, ib = b.id;
    return push(NdArray(na.value.shape(), std::move(buf)), na.needs_grad || nb.needs_grad,
                [self, ia, ib](Tape& t) {
                    const double* g = t.node(self).grad.data();
                    const std::size_t n = t.node(self).grad.size();
                    if (t.node(ia).needs_grad) kern::ops().axpy(1.0, g, t.grad_ptr(ia), n);
                    if (t.node(ib).needs_grad) kern::ops().axpy(-1.0, g, t.grad_ptr(ib), n);
                },
                "sub");
}

Var Tape::mul(Var a, Var b) {
    const Node& na = check(a, "mul");
    const Node& nb = check(b, "mul");
    require_same_shape(na.value, nb.value, "mul");
    std::vector<double> buf(na.value.size());
    kern::ops().mul(na.value.data(), nb.value.data(), buf.data(), buf.size());
    const std::size_t self = nodes_.size(), ia = a.id, ib = b.id;
    return push(NdArray(na.value.shape(), std::move(buf)), na.needs_grad || nb.needs_grad,
                [self, ia, ib](Tape& t) {
                    const double* g = t.node(self).grad.data();
                    const std::size_t n = t.node(self).grad.size();
                    if (t.node(ia).needs_grad) {
                        const double* bv = t.node(ib).value.data();
                        double* ga = t.grad_ptr(ia);
                        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
                    }
                    if (t.node(ib).needs_grad) {
                        const double* av = t.node(ia).value.data();
                        double* gb = t.grad_ptr(ib);
                        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
                    }
                },
                "mul");
}

Var Tape::div(Var a, Var b) {
    const Node& na = check(a, "div");
    const Node& nb = check(b, "div");
    require_same_shape(na.value, nb.value, "div");
    std::vector<double> buf(na.value.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = na.value[i] / nb.value[i];
    const std::size_t self = nodes_.size(), ia = a.id, ib = b.id;
    return push(NdArray(na.value.shape(), std::move(buf)), na.needs_grad || nb.needs_grad,
                [self, ia, ib](Tape& t) {
                    const double* g = t.node(self).grad.data();
                    const std::size_t n = t.node(self).grad.size();
                    const double* av = t.node(ia).value.data();
                    const double* bv = t.node(ib).value.data();
                    if (t.node(ia).needs_grad) {
                        double* ga = t.grad_ptr(ia);
                        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / bv[i];
                    }
                    if (t.node(ib).needs_grad) {
                        double* gb = t.grad_ptr(ib);
                        for (std::size_t i = 0; i < n; ++i)
                            gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                    }
                },
                "div");
}

Var Tape::scale(Var a, double c) {
    const Node& na = check(a, "scale");
    std::vector<double> buf(na.value.size());
    kern::ops().scale(na.value.data(), c, buf.data(), buf.size());
    const std::size_t self = nodes_.size(), ia = a.id;
    return push(NdArray(na.value.shape(), std::move(buf)), na.needs_grad,
                [self, ia, c](Tape& t) {
                    kern::ops().axpy(c, t.node(self).grad.data(), t.grad_ptr(ia),
                                     t.node(self).grad.size());
                },
                "scale");
}

Var Tape::add_scalar(Var a, double c) {
    const Node& na = check(a, "add_scalar");
    std::vector<double> buf(na.value.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = na.value[i] + c;
    const std::size_t self = nodes_.size(), ia = a.id;
    return push(NdArray(na.value.shape(), std::move(buf)), na.needs_grad,
                [self, ia](Tape& t) {
                    kern::ops().axpy(1.0, t.node(self).grad.data(), t.grad_ptr(ia),
                                     t.node(self).grad.size());
                },
                "add_scalar");
}

Var Tape::abs(Var a) {
    const Node& na = check(a, "abs");
    std::vector<double> buf(na.value.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = std::fabs(na.value[i]);
    const std::size_t self = nodes_.size(), ia = a.id;
    return push(NdArray(na.value.shape(), std::move(buf)), na.needs_grad,
                [self, ia](Tape& t) {
                    const double* g = t.node(self).grad.data();
                    const double* x = t.node(ia).value.data();
                    double* ga = t.grad_ptr(ia);
                    const std::size_t n = t.node(self).grad.size();
                    for (std::size_t i = 0; i < n; ++i)
                        ga[i] += x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
                },
                "abs");
}

Var Tape::relu(Var a) {
    const Node& na = check(a, "relu");
    std::vector<double> buf(na.value.size());
    kern::ops().relu(na.value.data(), buf.data(), buf.size());
    const std::size_t self = nodes_.size(), ia = a.id;
    return push(NdArray(na.value.shape(), std::move(buf)), na.needs_grad,
                [self, ia](Tape& t) {
                    const std::size_t n = t.node(self).grad.size();
                    std::vector<double> masked(n);
                    kern::ops().relu_mask_mul(t.node(ia).value.data(), t.node(self).grad.data(),
                                              masked.data(), n);
                    kern::ops().axpy(1.0, masked.data(), t.grad_ptr(ia), n);
                },
                "relu");
}

// ------------------------------------------------------------- linear algebra

Var Tape::matmul(Var a, Var b) {
    const Node& na = check(a, "matmul");
    const Node& nb = check(b, "matmul");
    const Shape& sa = na.value.shape();
    const Shape& sb = nb.value.shape();
    if (sa.size() != sb.size())
        throw ContractError("matmul: rank mismatch " + shape_string(sa) + " vs " + shape_string(sb));
    const MatShape ma = mat_shape(sa, "matmul");
    const MatShape mb = mat_shape(sb, "matmul");
    for (std::size_t i = 0; i + 2 < sa.size(); ++i)
        if (sa[i] != sb[i])
            throw ContractError("matmul: batch dims differ " + shape_string(sa) + " vs " +
                                shape_string(sb));
    if (ma.c != mb.r)
        throw ContractError("matmul: inner dims differ " + shape_string(sa) + " vs " +
                            shape_string(sb));
    const std::size_t B = ma.batch, R = ma.r, K = ma.c, C = mb.c;
    Shape out_shape(sa.begin(), sa.end() - 2);
    out_shape.push_back(R);
    out_shape.push_back(C);
    std::vector<double> buf(B * R * C, 0.0);
    for (std::size_t bi = 0; bi < B; ++bi)
        kern::ops().gemm_acc(na.value.data() + bi * R * K, nb.value.data() + bi * K * C,
                             buf.data() + bi * R * C, R, K, C);
    const std::size_t self = nodes_.size(), ia = a.id, ib = b.id;
    return push(NdArray(std::move(out_shape), std::move(buf)), na.needs_grad || nb.needs_grad,
                [self, ia, ib, B, R, K, C](Tape& t) {
                    const double* g = t.node(self).grad.data();
                    const double* av = t.node(ia).value.data();
                    const double* bv = t.node(ib).value.data();
                    if (t.node(ia).needs_grad) {
                        // ga[b] += g[b] . b[b]^T
                        std::vector<double> bT(K * C);
                        double* ga = t.grad_ptr(ia);
                        for (std::size_t bi = 0; bi < B; ++bi) {
                            mat_transpose(bv + bi * K * C, K, C, bT.data());
                            kern::ops().gemm_acc(g + bi * R * C, bT.data(), ga + bi * R * K, R, C, K);
                        }
                    }
                    if (t.node(ib).needs_grad) {
                        // gb[b] += a[b]^T . g[b]
                        std::vector<double> aT(R * K);
                        double* gb = t.grad_ptr(ib);
                        for (std::size_t bi = 0; bi < B; ++bi) {
                            mat_transpose(av + bi * R * K, R, K, aT.data());
                            kern::ops().gemm_acc(aT.data(), g + bi * R * C, gb + bi * K * C, K, R, C);
                        }
                    }
                },
                "matmul");
}

Var Tape::linear(Var x, Var w) {
    const Node& nx = check(x, "linear");
    const Node& nw = check(w, "linear");
    const Shape& sx = nx.value.shape();
    const Shape& sw = nw.value.shape();
    if (sw.size() != 2) throw ContractError("linear: weight must be rank 2, got " + shape_string(sw));
    if (sx.empty() || sx.back() != sw[0])
        throw ContractError("linear: input " + shape_string(sx) + " does not match weight " +
                            shape_string(sw));
    const std::size_t K = sw[0], C = sw[1];
    const std::size_t R = nx.value.size() / K;
    Shape out_shape(sx.begin(), sx.end() - 1);
    out_shape.push_back(C);
    std::vector<double> buf(R * C, 0.0);
    kern::ops().gemm_acc(nx.value.data(), nw.value.data(), buf.data(), R, K, C);
    const std::size_t self = nodes_.size(), ix = x.id, iw = w.id;
    return push(NdArray(std::move(out_shape), std::move(buf)), nx.needs_grad || nw.needs_grad,
                [self, ix, iw, R, K, C](Tape& t) {
                    const double* g = t.node(self).grad.data();
                    if (t.node(ix).needs_grad) {
                        std::vector<double> wT(C * K);
                        mat_transpose(t.node(iw).value.data(), K, C, wT.data());
                        kern::ops().gemm_acc(g, wT.data(), t.grad_ptr(ix), R, C, K);
                    }
                    if (t.node(iw).needs_grad) {
                        std::vector<double> xT(K * R);
                        mat_transpose(t.node(ix).value.data(), R, K, xT.data());
                        kern::ops().gemm_acc(xT.data(), g, t.grad_ptr(iw), K, R, C);
                    }
                },
                "linear");
}

Var Tape::affine(Var x, Var w, Var b) {
    {
        const Node& nb0 = check(b, "affine");
        const Node& nw0 = check(w, "affine");
        if (nb0.value.rank() != 1 || nb0.value.dim(0) != nw0.value.shape().back())
            throw ContractError("affine: bias " + shape_string(nb0.value.shape()) +
                                " does not match weight " + shape_string(nw0.value.shape()));
    }
    Var lin = linear(x, w);
    // linear() grew the node vector, so any Node reference taken before it is
    // stale; re-fetch both nodes by id.
    const Node& nb = node(b.id);
    const Node& nl = node(lin.id);
    const std::size_t C = nb.value.dim(0);
    const std::size_t R = nl.value.size() / C;
    std::vector<double> buf(nl.value.size());
    for (std::size_t r = 0; r < R; ++r)
        kern::ops().add(nl.value.data() + r * C, nb.value.data(), buf.data() + r * C, C);
    const std::size_t self = nodes_.size(), il = lin.id, ib = b.id;
    return push(NdArray(nl.value.shape(), std::move(buf)), nl.needs_grad || nb.needs_grad,
                [self, il, ib, R, C](Tape& t) {
                    const double* g = t.node(self).grad.data();
                    if (t.node(il).needs_grad)
                        kern::ops().axpy(1.0, g, t.grad_ptr(il), R * C);
                    if (t.node(ib).needs_grad) {
                        double* gb = t.grad_ptr(ib);
                        for (std::size_t r = 0; r < R; ++r)
                            kern::ops().axpy(1.0, g + r * C, gb, C);
                    }
                },
                "affine");
}

// ------------------------------------------------------------------- shape

Var Tape::permute(Var a, const std::vector<std::size_t>& axes) {
    const Node& na = check(a, "permute");
    const Shape& s = na.value.shape();
    if (axes.size() != s.size())
        throw ContractError("permute: axes count " + std::to_string(axes.size()) +
                            " for rank " + std::to_string(s.size()));
    std::vector<bool> seen(axes.size(), false);
    for (std::size_t ax : axes) {
        if (ax >= axes.size() || seen[ax])
            throw ContractError("permute: axes are not a permutation");
        seen[ax] = true;
    }
    Shape out_shape(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out_shape[i] = s[axes[i]];
    std::vector<double> buf(na.value.size());
    permute_copy(na.value.data(), s, axes, buf.data());
    const std::size_t self = nodes_.size(), ia = a.id;
    const std::vector<std::size_t> inv = inverse_axes(axes);
    return push(NdArray(std::move(out_shape), std::move(buf)), na.needs_grad,
                [self, ia, inv](Tape& t) {
                    const Node& sn = t.node(self);
                    std::vector<double> back(sn.grad.size());
                    permute_copy(sn.grad.data(), sn.value.shape(), inv, back.data());
                    kern::ops().axpy(1.0, back.data(), t.grad_ptr(ia), back.size());
                },
                "permute");
}

Var Tape::reshape(Var a, Shape shape) {
    const Node& na = check(a, "reshape");
    NdArray out = na.value.reshaped(std::move(shape));
    const std::size_t self = nodes_.size(), ia = a.id;
    return push(std::move(out), na.needs_grad,
                [self, ia](Tape& t) {
                    kern::ops().axpy(1.0, t.node(self).grad.data(), t.grad_ptr(ia),
                                     t.node(self).grad.size());
                },
                "reshape");
}

Var Tape::concat_last(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_last: no operands");
    std::vector<std::size_t> ids;
    std::vector<std::size_t> widths;
    bool ng = false;
    const Node& first = check(parts[0], "concat_last");
    Shape lead(first.value.shape().begin(), first.value.shape().end() - 1);
    std::size_t total_cols = 0;
    for (Var p : parts) {
        const Node& n = check(p, "concat_last");
        Shape plead(n.value.shape().begin(), n.value.shape().end() - 1);
        if (plead != lead)
            throw ContractError("concat_last: leading dims differ: " +
                                shape_string(first.value.shape()) + " vs " +
                                shape_string(n.value.shape()));
        ids.push_back(p.id);
        widths.push_back(n.value.shape().back());
        total_cols += widths.back();
        ng = ng || n.needs_grad;
    }
    std::size_t rows = 1;
    for (std::size_t d : lead) rows *= d;
    Shape out_shape = lead;
    out_shape.push_back(total_cols);
    std::vector<double> buf(rows * total_cols);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < ids.size(); ++pi) {
            const double* src = node(ids[pi]).value.data() + r * widths[pi];
            std::memcpy(buf.data() + r * total_cols + off, src, widths[pi] * sizeof(double));
            off += widths[pi];
        }
    }
    const std::size_t self = nodes_.size();
    return push(NdArray(std::move(out_shape), std::move(buf)), ng,
                [self, ids, widths, rows, total_cols](Tape& t) {
                    const double* g = t.node(self).grad.data();
                    std::size_t off = 0;
                    for (std::size_t pi = 0; pi < ids.size(); ++pi) {
                        if (t.node(ids[pi]).needs_grad) {
                            double* gp = t.grad_ptr(ids[pi]);
                            for (std::size_t r = 0; r < rows; ++r)
                                kern::ops().axpy(1.0, g + r * total_cols + off,
                                                 gp + r * widths[pi], widths[pi]);
                        }
                        off += widths[pi];
                    }
                },
                "concat_last");
}

// ---------------------------------------------------- row-wise over last axis

Var Tape::softmax_last(Var a) {
    const Node& na = check(a, "softmax_last");
    const RowView rv = row_view(na.value.shape(), "softmax_last");
    std::vector<double> buf(na.value.size());
    for (std::size_t r = 0; r < rv.rows; ++r) {
        const double* x = na.value.data() + r * rv.cols;
        double* y = buf.data() + r * rv.cols;
        const double m = kern::ops().max(x, rv.cols);
        for (std::size_t i = 0; i < rv.cols; ++i) y[i] = std::exp(x[i] - m);
        const double s = kern::ops().sum(y, rv.cols);
        kern::ops().scale(y, 1.0 / s, y, rv.cols);
    }
    const std::size_t self = nodes_.size(), ia = a.id;
    return push(NdArray(na.value.shape(), std::move(buf)), na.needs_grad,
                [self, ia, rv](Tape& t) {
                    const Node& sn = t.node(self);
                    double* ga = t.grad_ptr(ia);
                    for (std::size_t r = 0; r < rv.rows; ++r) {
                        const double* g = sn.grad.data() + r * rv.cols;
                        const double* y = sn.value.data() + r * rv.cols;
                        const double d = kern::ops().dot(g, y, rv.cols);
                        double* gx = ga + r * rv.cols;
                        for (std::size_t i = 0; i < rv.cols; ++i) gx[i] += y[i] * (g[i] - d);
                    }
                },
                "softmax_last");
}

Var Tape::log_softmax_last(Var a) {
    const Node& na = check(a, "log_softmax_last");
    const RowView rv = row_view(na.value.shape(), "log_softmax_last");
    std::vector<double> buf(na.value.size());
    for (std::size_t r = 0; r < rv.rows; ++r) {
        const double* x = na.value.data() + r * rv.cols;
        double* y = buf.data() + r * rv.cols;
        const double m = kern::ops().max(x, rv.cols);
        double s = 0.0;
        for (std::size_t i = 0; i < rv.cols; ++i) s += std::exp(x[i] - m);
        const double lse = m + std::log(s);
        for (std::size_t i = 0; i < rv.cols; ++i) y[i] = x[i] - lse;
    }
    const std::size_t self = nodes_.size(), ia = a.id;
    return push(NdArray(na.value.shape(), std::move(buf)), na.needs_grad,
                [self, ia, rv](Tape& t) {
                    const Node& sn = t.node(self);
                    double* ga = t.grad_ptr(ia);
                    for (std::size_t r = 0; r < rv.rows; ++r) {
                        const double* g = sn.grad.data() + r * rv.cols;
                        const double* y = sn.value.data() + r * rv.cols;
                        const double gs = kern::ops().sum(g, rv.cols);
                        double* gx = ga + r * rv.cols;
                        for (std::size_t i = 0; i < rv.cols; ++i)
                            gx[i] += g[i] - std::exp(y[i]) * gs;
                    }
                },
                "log_softmax_last");
}

Var Tape::renorm_rows_l1(Var a) {
    const Node& na = check(a, "renorm_rows_l1");
    const RowView rv = row_view(na.value.shape(), "renorm_rows_l1");
    std::vector<double> buf(na.value.size());
    std::vector<double> sums(rv.rows);
    for (std::size_t r = 0; r < rv.rows; ++r) {
        const double* x = na.value.data() + r * rv.cols;
        const double s = kern::ops().sum(x, rv.cols);
        if (!(s > 0.0))
            throw NumericError("renorm_rows_l1: row " + std::to_string(r) +
                               " has non-positive sum " + std::to_string(s));
        sums[r] = s;
        kern::ops().scale(x, 1.0 / s, buf.data() + r * rv.cols, rv.cols);
    }
    const std::size_t self = nodes_.size(), ia = a.id;
    return push(NdArray(na.value.shape(), std::move(buf)), na.needs_grad,
                [self, ia, rv, sums](Tape& t) {
                    const Node& sn = t.node(self);
                    double* ga = t.grad_ptr(ia);
                    for (std::size_t r = 0; r < rv.rows; ++r) {
                        const double* g = sn.grad.data() + r * rv.cols;
                        const double* y = sn.value.data() + r * rv.cols;
                        const double d = kern::ops().dot(g, y, rv.cols);
                        double* gx = ga + r * rv.cols;
                        for (std::size_t i = 0; i < rv.cols; ++i)
                            gx[i] += (g[i] - d) / sums[r];
                    }
                },
                "renorm_rows_l1");
}

Var Tape::mean_last_keepdim(Var a) {
    const Node& na = check(a, "mean_last_keepdim");
    const RowView rv = row_view(na.value.shape(), "mean_last_keepdim");
    Shape out_shape = na.value.shape();
    out_shape.back() = 1;
    std::vector<double> buf(rv.rows);
    for (std::size_t r = 0; r < rv.rows; ++r)
        buf[r] = kern::ops().sum(na.value.data() + r * rv.cols, rv.cols) /
                 static_cast<double>(rv.cols);
    const std::size_t self = nodes_.size(), ia = a.id;
    return push(NdArray(std::move(out_shape), std::move(buf)), na.needs_grad,
                [self, ia, rv](Tape& t) {
                    const double* g = t.node(self).grad.data();
                    double* ga = t.grad_ptr(ia);
                    const double inv = 1.0 / static_cast<double>(rv.cols);
                    for (std::size_t r = 0; r < rv.rows; ++r) {
                        const double gr = g[r] * inv;
                        double* gx = ga + r * rv.cols;
                        for (std::size_t i = 0; i < rv.cols; ++i) gx[i] += gr;
                    }
                },
                "mean_last_keepdim");
}

Var Tape::standardize_last(Var a, double eps) {
    const Node& na = check(a, "standardize_last");
    if (!(eps > 0.0)) throw ContractError("standardize_last: eps must be positive");
    const RowView rv = row_view(na.value.shape(), "standardize_last");
    std::vector<double> buf(na.value.size());
    std::vector<double> sigmas(rv.rows);
    std::vector<char> floored(rv.rows);
    for (std::size_t r = 0; r < rv.rows; ++r) {
        const double* x = na.value.data() + r * rv.cols;
        double* y = buf.data() + r * rv.cols;
        const double mu = kern::ops().sum(x, rv.cols) / static_cast<double>(rv.cols);
        double var = 0.0;
        for (std::size_t i = 0; i < rv.cols; ++i) {
            const double d = x[i] - mu;
            var += d * d;
        }
        var /= static_cast<double>(rv.cols);
        const double sd = std::sqrt(var);
        floored[r] = sd < eps;
        const double sigma = floored[r] ? eps : sd;
        sigmas[r] = sigma;
        for (std::size_t i = 0; i < rv.cols; ++i) y[i] = (x[i] - mu) / sigma;
    }
    const std::size_t self = nodes_.size(), ia = a.id;
    return push(NdArray(na.value.shape(), std::move(buf)), na.needs_grad,
                [self, ia, rv, sigmas, floored](Tape& t) {
                    const Node& sn = t.node(self);
                    double* ga = t.grad_ptr(ia);
                    const double n = static_cast<double>(rv.cols);
                    for (std::size_t r = 0; r < rv.rows; ++r) {
                        const double* g = sn.grad.data() + r * rv.cols;
                        const double* y = sn.value.data() + r * rv.cols;
                        double* gx = ga + r * rv.cols;
                        const double gbar = kern::ops().sum(g, rv.cols) / n;
                        if (floored[r]) {
                            // sigma is the constant eps: only the mean couples.
                            for (std::size_t i = 0; i < rv.cols; ++i)
                                gx[i] += (g[i] - gbar) / sigmas[r];
                        } else {
                            const double gy = kern::ops().dot(g, y, rv.cols) / n;
                            for (std::size_t i = 0; i < rv.cols; ++i)
                                gx[i] += (g[i] - gbar - y[i] * gy) / sigmas[r];
                        }
                    }
                },
                "standardize_last");
}

// -------------------------------------------------------- masking / broadcast

Var Tape::masked_fill(Var a, const NdArray& mask, double fill) {
    const Node& na = check(a, "masked_fill");
    require_same_shape(na.value, mask, "masked_fill");
    std::vector<double> buf(na.value.size());
    for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = mask[i] != 0.0 ? fill : na.value[i];
    const std::size_t self = nodes_.size(), ia = a.id;
    std::vector<double> keep(mask.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = mask[i] != 0.0 ? 0.0 : 1.0;
    return push(NdArray(na.value.shape(), std::move(buf)), na.needs_grad,
                [self, ia, keep](Tape& t) {
                    const double* g = t.node(self).grad.data();
                    double* ga = t.grad_ptr(ia);
                    for (std::size_t i = 0; i < keep.size(); ++i) ga[i] += g[i] * keep[i];
                },
                "masked_fill");
}

Var Tape::scale_shift_last(Var x, Var alpha, Var gamma) {
    const Node& nx = check(x, "scale_shift_last");
    const Node& nal = check(alpha, "scale_shift_last");
    const Node& nga = check(gamma, "scale_shift_last");
    const RowView rv = row_view(nx.value.shape(), "scale_shift_last");
    if (nal.value.rank() != 1 || nal.value.dim(0) != rv.cols ||
        nga.value.rank() != 1 || nga.value.dim(0) != rv.cols)
        throw ContractError("scale_shift_last: alpha/gamma must be rank-1 of width " +
                            std::to_string(rv.cols));
    std::vector<double> buf(nx.value.size());
    for (std::size_t r = 0; r < rv.rows; ++r) {
        const double* xr = nx.value.data() + r * rv.cols;
        double* y = buf.data() + r * rv.cols;
        for (std::size_t e = 0; e < rv.cols; ++e) y[e] = xr[e] * nal.value[e] + nga.value[e];
    }
    const std::size_t self = nodes_.size(), ix = x.id, ial = alpha.id, iga = gamma.id;
    return push(NdArray(nx.value.shape(), std::move(buf)),
                nx.needs_grad || nal.needs_grad || nga.needs_grad,
                [self, ix, ial, iga, rv](Tape& t) {
                    const double* g = t.node(self).grad.data();
                    const double* xv = t.node(ix).value.data();
                    const double* al = t.node(ial).value.data();
                    if (t.node(ix).needs_grad) {
                        double* gx = t.grad_ptr(ix);
                        for (std::size_t r = 0; r < rv.rows; ++r)
                            for (std::size_t e = 0; e < rv.cols; ++e)
                                gx[r * rv.cols + e] += g[r * rv.cols + e] * al[e];
                    }
                    if (t.node(ial).needs_grad) {
                        double* gal = t.grad_ptr(ial);
                        for (std::size_t r = 0; r < rv.rows; ++r)
                            for (std::size_t e = 0; e < rv.cols; ++e)
                                gal[e] += g[r * rv.cols + e] * xv[r * rv.cols + e];
                    }
                    if (t.node(iga).needs_grad) {
                        double* gga = t.grad_ptr(iga);
                        for (std::size_t r = 0; r < rv.rows; ++r)
                            kern::ops().axpy(1.0, g + r * rv.cols, gga, rv.cols);
                    }
                },
                "scale_shift_last");
}

Var Tape::add_bcast_mid(Var x, Var t_in) {
    const Node& nx = check(x, "add_bcast_mid");
    const Node& nt = check(t_in, "add_bcast_mid");
    const Shape& sx = nx.value.shape();
    const Shape& st = nt.value.shape();
    if (sx.size() != 3 || st.size() != 2 || sx[0] != st[0] || sx[2] != st[1])
        throw ContractError("add_bcast_mid: want x (A,B,C) and t (A,C), got " +
                            shape_string(sx) + " and " + shape_string(st));
    const std::size_t A = sx[0], Bm = sx[1], C = sx[2];
    std::vector<double> buf(nx.value.size());
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < Bm; ++b)
            kern::ops().add(nx.value.data() + (a * Bm + b) * C, nt.value.data() + a * C,
                            buf.data() + (a * Bm + b) * C, C);
    const std::size_t self = nodes_.size(), ix = x.id, it = t_in.id;
    return push(NdArray(sx, std::move(buf)), nx.needs_grad || nt.needs_grad,
                [self, ix, it, A, Bm, C](Tape& t) {
                    const double* g = t.node(self).grad.data();
                    if (t.node(ix).needs_grad)
                        kern::ops().axpy(1.0, g, t.grad_ptr(ix), A * Bm * C);
                    if (t.node(it).needs_grad) {
                        double* gt = t.grad_ptr(it);
                        for (std::size_t a = 0; a < A; ++a)
                            for (std::size_t b = 0; b < Bm; ++b)
                                kern::ops().axpy(1.0, g + (a * Bm + b) * C, gt + a * C, C);
                    }
                },
                "add_bcast_mid");
}

// ------------------------------------------------------- scalar reductions

Var Tape::mean_all(Var a) {
    const Node& na = check(a, "mean_all");
    const std::size_t n = na.value.size();
    const double v = kern::ops().sum(na.value.data(), n) / static_cast<double>(n);
    const std::size_t self = nodes_.size(), ia = a.id;
    return push(NdArray::scalar(v), na.needs_grad,
                [self, ia, n](Tape& t) {
                    const double gr = t.node(self).grad[0] / static_cast<double>(n);
                    double* ga = t.grad_ptr(ia);
                    for (std::size_t i = 0; i < n; ++i) ga[i] += gr;
                },
                "mean_all");
}

Var Tape::sum_all(Var a) {
    const Node& na = check(a, "sum_all");
    const std::size_t n = na.value.size();
    const double v = kern::ops().sum(na.value.data(), n);
    const std::size_t self = nodes_.size(), ia = a.id;
    return push(NdArray::scalar(v), na.needs_grad,
                [self, ia, n](Tape& t) {
                    const double gr = t.node(self).grad[0];
                    double* ga = t.grad_ptr(ia);
                    for (std::size_t i = 0; i < n; ++i) ga[i] += gr;
                },
                "sum_all");
}

// ----------------------------------------------------------------- execution

const NdArray& Tape::value(Var v) const { return check(v, "value").value; }

std::map<std::string, NdArray> Tape::backward(Var loss) {
    const Node& nl = check(loss, "backward");
    if (nl.value.size() != 1)
        throw ContractError("backward: loss must be scalar, got " +
                            shape_string(nl.value.shape()));
    if (!nl.needs_grad)
        throw ContractError("backward: loss does not depend on any differentiable leaf");
    // Re-runnable: each call starts from zeroed gradients, so repeated
    // backward passes over one recorded graph agree bit-for-bit.
    for (Node& n : nodes_)
        if (n.needs_grad) std::fill(n.grad.begin(), n.grad.end(), 0.0);
    backward_done_ = true;
    nodes_[loss.id].grad[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.needs_grad && n.vjp) n.vjp(*this);
    }
    std::map<std::string, NdArray> grads;
    for (const Node& n : nodes_) {
        if (!n.is_leaf || n.name.empty() || !n.value.requires_grad) continue;
        NdArray g(n.value.shape(), n.grad);
        require_finite(g, ("backward: gradient of '" + n.name + "'").c_str());
        grads.emplace(n.name, std::move(g));
    }
    return grads;
}

NdArray Tape::grad_of(Var v) const {
    const Node& n = check(v, "grad_of");
    if (!backward_done_) throw ContractError("grad_of: backward has not run");
    if (!n.needs_grad) return NdArray::zeros(n.value.shape());
    return NdArray(n.value.shape(), n.grad);
}

} // namespace caformer::tape
