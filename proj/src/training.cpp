#include "caformer/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "caformer/error.hpp"

namespace caformer {

LossKind loss_from_string(const std::string& s) {
    if (s == "mse") return LossKind::mse;
    if (s == "smape") return LossKind::smape;
    if (s == "cross_entropy") return LossKind::cross_entropy;
    throw ContractError("unknown loss: '" + s + "'");
}

const char* loss_name(LossKind k) {
    switch (k) {
        case LossKind::mse: return "mse";
        case LossKind::smape: return "smape";
        case LossKind::cross_entropy: return "cross_entropy";
    }
    throw ContractError("loss_name: bad enum value");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ContractError("train config: learning_rate must be > 0");
    if (epochs == 0) throw ContractError("train config: epochs must be >= 1");
    if (batch_size == 0) throw ContractError("train config: batch_size must be >= 1");
    if (task == Task::classification && loss != LossKind::cross_entropy)
        throw ContractError("train config: classification trains with cross_entropy");
    if (task != Task::classification && loss == LossKind::cross_entropy)
        throw ContractError("train config: cross_entropy needs the classification task");
}

tape::Var loss_fn(tape::Tape& t, tape::Var pred, tape::Var target,
                  const std::optional<NdArray>& mask, LossKind kind) {
    using tape::Var;
    if (kind == LossKind::cross_entropy) {
        if (mask.has_value()) throw ContractError("loss_fn: cross_entropy takes no mask");
        Var logp = t.log_softmax_last(pred);
        return t.scale(t.sum_all(t.mul(logp, target)), -1.0);
    }
    if (pred.shape() != target.shape())
        throw ContractError("loss_fn: pred shape " + shape_string(pred.shape()) +
                            " vs target shape " + shape_string(target.shape()));
    Var per_entry = [&] {
        if (kind == LossKind::mse) {
            Var d = t.sub(pred, target);
            return t.mul(d, d);
        }
        // smape on the 0..200 scale, small-denominator guard keeps it smooth
        Var num = t.abs(t.sub(pred, target));
        Var den = t.add_scalar(t.add(t.abs(pred), t.abs(target)), 1e-8);
        return t.scale(t.div(num, den), 200.0);
    }();
    if (!mask.has_value()) return t.mean_all(per_entry);
    if (mask->shape() != pred.shape())
        throw ContractError("loss_fn: mask shape " + shape_string(mask->shape()) +
                            " vs pred shape " + shape_string(pred.shape()));
    double support = 0.0;
    for (std::size_t i = 0; i < mask->size(); ++i) support += mask->data()[i];
    if (support == 0.0) throw ContractError("loss_fn: mask selects no entries");
    Var masked = t.mul(per_entry, t.constant(*mask));
    return t.scale(t.sum_all(masked), 1.0 / support);
}

void Adam::step(ParamStore& params, const std::map<std::string, NdArray>& grads) {
    auto& items = params.items();
    if (m.empty()) {
        m.resize(items.size());
        v.resize(items.size());
        for (std::size_t i = 0; i < items.size(); ++i) {
            m[i].assign(items[i].second.size(), 0.0);
            v[i].assign(items[i].second.size(), 0.0);
        }
    }
    if (m.size() != items.size())
        throw ContractError("adam: parameter count changed mid-run");
    ++step_count;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto it = grads.find(items[i].first);
        if (it == grads.end())
            throw ContractError("adam: no gradient for parameter '" + items[i].first + "'");
        const NdArray& g = it->second;
        NdArray& p = items[i].second;
        if (g.size() != p.size())
            throw ContractError("adam: gradient size mismatch for '" + items[i].first + "'");
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = g.data()[j];
            m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * gj;
            v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * gj * gj;
            const double mhat = m[i][j] / c1;
            const double vhat = v[i][j] / c2;
            p.data()[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

NormStats full_series_stats(const NdArray& values, double eps) {
    const std::size_t M = values.dim(0), L = values.dim(1);
    NormStats st;
    st.mean.resize(M);
    st.sigma.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        double mu = 0.0;
        for (std::size_t s = 0; s < L; ++s) mu += values.data()[m * L + s];
        mu /= static_cast<double>(L);
        double var = 0.0;
        for (std::size_t s = 0; s < L; ++s) {
            const double d = values.data()[m * L + s] - mu;
            var += d * d;
        }
        var /= static_cast<double>(L);
        st.mean[m] = mu;
        st.sigma[m] = std::max(std::sqrt(var), eps);
    }
    return st;
}

namespace {

NdArray zero_masked(const NdArray& x, const NdArray& mask) {
    require_same_shape(x, mask, "zero_masked");
    NdArray out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (mask.data()[i] != 0.0) out.data()[i] = 0.0;
    return out;
}

NdArray one_hot(int label, std::size_t num_classes) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes)
        throw ContractError("one_hot: label " + std::to_string(label) + " outside [0," +
                            std::to_string(num_classes) + ")");
    NdArray v = NdArray::zeros({num_classes});
    v.data()[static_cast<std::size_t>(label)] = 1.0;
    return v;
}

// A prepared sample: normalized input plus the task target.
struct Sample {
    NdArray input;               // (M, L_in), already normalized
    NdArray target;              // (M,H) / (M,L_in) / one-hot (C)
    std::optional<NdArray> mask; // loss restriction (imputation)
    bool has_input_mask = false; // zero the masked inputs before the forward
};

std::vector<Sample> windows_to_samples(const std::vector<Window>& ws, const NormStats& st,
                                       Task task) {
    std::vector<Sample> out;
    out.reserve(ws.size());
    for (const Window& w : ws) {
        Sample s;
        s.input = normalize_rows(w.input, st);
        s.target = normalize_rows(w.target, st);
        if (task == Task::imputation) {
            if (w.mask.size() == 0) throw ContractError("imputation window without a mask");
            s.mask = w.mask;
            s.has_input_mask = true;
        }
        out.push_back(std::move(s));
    }
    return out;
}

double batch_pass(const std::vector<Sample>& samples, const std::vector<std::size_t>& order,
                  std::size_t lo, std::size_t hi, ParamStore& params, const CaformerConfig& cfg,
                  const HeadConfig& head, const TrainConfig& tc, Adam* opt) {
    tape::Tape t;
    std::map<std::string, tape::Var> leaves = params.leaves(t);
    tape::Var total;
    bool first = true;
    for (std::size_t i = lo; i < hi; ++i) {
        const Sample& s = samples[order[i]];
        const NdArray* in_mask = s.has_input_mask ? &*s.mask : nullptr;
        tape::Var pred = model_forward(t, leaves, cfg, head, tc.ablation, s.input, in_mask);
        tape::Var li = loss_fn(t, pred, t.constant(s.target), s.mask, tc.loss);
        total = first ? li : t.add(total, li);
        first = false;
    }
    total = t.scale(total, 1.0 / static_cast<double>(hi - lo));
    const double loss = total.value().data()[0];
    if (opt) {
        std::map<std::string, NdArray> grads = t.backward(total);
        opt->step(params, grads);
    }
    return loss;
}

double dataset_loss(const std::vector<Sample>& samples, ParamStore& params,
                    const CaformerConfig& cfg, const HeadConfig& head, const TrainConfig& tc) {
    if (samples.empty()) throw ContractError("dataset_loss: no samples");
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    double acc = 0.0;
    for (std::size_t lo = 0; lo < samples.size(); lo += tc.batch_size) {
        const std::size_t hi = std::min(samples.size(), lo + tc.batch_size);
        acc += batch_pass(samples, order, lo, hi, params, cfg, head, tc, nullptr) *
               static_cast<double>(hi - lo);
    }
    return acc / static_cast<double>(samples.size());
}

TrainResult run_loop(std::vector<Sample> train_samples, std::vector<Sample> val_samples,
                     const CaformerConfig& cfg, const HeadConfig& head, const TrainConfig& tc,
                     const NormStats& norm) {
    if (train_samples.empty()) throw ContractError("train: no training windows");
    ParamStore params;
    Rng rng(tc.seed);
    init_backbone_params(params, cfg, rng);
    init_head_params(params, cfg, head, rng);

    Adam opt;
    opt.lr = tc.learning_rate;

    TrainResult res;
    res.norm = norm;
    res.params = params;
    res.best_val = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;

    std::vector<std::size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        // Fisher-Yates off the run seed keeps batching reproducible.
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = rng.below(i);
            std::swap(order[i - 1], order[j]);
        }
        double acc = 0.0;
        for (std::size_t lo = 0; lo < train_samples.size(); lo += tc.batch_size) {
            const std::size_t hi = std::min(train_samples.size(), lo + tc.batch_size);
            acc += batch_pass(train_samples, order, lo, hi, params, cfg, head, tc, &opt) *
                   static_cast<double>(hi - lo);
        }
        const double train_loss = acc / static_cast<double>(train_samples.size());
        const double val_loss = val_samples.empty()
                                    ? train_loss
                                    : dataset_loss(val_samples, params, cfg, head, tc);
        const auto t1 = std::chrono::steady_clock::now();
        const double wall_ms =
            std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0).count();
        res.log.push_back({epoch, train_loss, val_loss, wall_ms});

        if (val_loss < res.best_val) {
            res.best_val = val_loss;
            res.best_epoch = epoch;
            res.params = params;
            stale = 0;
        } else if (++stale >= tc.patience) {
            break;
        }
    }
    return res;
}

} // namespace

tape::Var model_forward(tape::Tape& t, const std::map<std::string, tape::Var>& params,
                        const CaformerConfig& cfg, const HeadConfig& head, Ablation ablation,
                        const NdArray& input_norm, const NdArray* recon_mask,
                        BackboneOutput* bb_out, bool want_diagnostics) {
    if (input_norm.shape().size() != 2 || input_norm.dim(0) != cfg.M ||
        input_norm.dim(1) != cfg.L_in)
        throw ContractError("model_forward: input shape " + shape_string(input_norm.shape()) +
                            " does not match config (" + std::to_string(cfg.M) + "," +
                            std::to_string(cfg.L_in) + ")");
    const NdArray* fed = &input_norm;
    NdArray holed;
    if (recon_mask) {
        holed = zero_masked(input_norm, *recon_mask);
        fed = &holed;
    }
    BackboneOutput bb = backbone_forward_series(t, *fed, cfg, params, ablation, want_diagnostics);
    tape::Var out;
    switch (head.task) {
        case Task::long_forecast:
        case Task::short_forecast: out = forecast_head(t, bb.s_temporal, params); break;
        case Task::imputation:
        case Task::anomaly: out = reconstruction_head(t, bb.s_temporal, params); break;
        case Task::classification: out = classification_head(t, bb.s_temporal, params); break;
    }
    if (bb_out) *bb_out = std::move(bb);
    return out;
}

TrainResult train(const SeriesDataset& ds, const CaformerConfig& cfg, const HeadConfig& head,
                  const TrainConfig& tc) {
    tc.validate();
    cfg.validate();
    head.validate();
    ds.validate();
    if (tc.task != head.task) throw ContractError("train: config task disagrees with head task");
    if (tc.task == Task::classification)
        throw ContractError("train: classification needs train_classifier over a corpus");

    const NormStats st = train_split_stats(ds);
    std::vector<Window> train_w, val_w;
    if (tc.task == Task::long_forecast || tc.task == Task::short_forecast) {
        train_w = make_windows(ds, Split::train, cfg.L_in, head.H, 1);
        val_w = make_windows(ds, Split::val, cfg.L_in, head.H, 1);
    } else { // imputation, anomaly: reconstruction windows
        train_w = make_recon_windows(ds, Split::train, cfg.L_in, 1);
        val_w = make_recon_windows(ds, Split::val, cfg.L_in, 1);
    }
    std::vector<Sample> train_s = windows_to_samples(train_w, st, tc.task);
    std::vector<Sample> val_s = windows_to_samples(val_w, st, tc.task);
    return run_loop(std::move(train_s), std::move(val_s), cfg, head, tc, st);
}

std::pair<std::size_t, std::size_t> corpus_split(std::size_t n) {
    const std::size_t train_n = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
    const std::size_t val_n = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
    return {train_n, val_n};
}

TrainResult train_classifier(const std::vector<SeriesDataset>& corpus, const CaformerConfig& cfg,
                             const HeadConfig& head, const TrainConfig& tc) {
    tc.validate();
    cfg.validate();
    head.validate();
    if (tc.task != Task::classification || head.task != Task::classification)
        throw ContractError("train_classifier: task must be classification");
    if (corpus.size() < 2) throw ContractError("train_classifier: corpus needs >= 2 series");

    std::vector<Sample> train_s, val_s;
    const std::size_t n = corpus.size();
    const auto [train_n, val_n] = corpus_split(n);
    for (std::size_t i = 0; i < n; ++i) {
        const SeriesDataset& ds = corpus[i];
        if (!ds.label.has_value())
            throw ContractError("train_classifier: series " + std::to_string(i) + " has no label");
        if (ds.M() != cfg.M || ds.L() != cfg.L_in)
            throw ContractError("train_classifier: series " + std::to_string(i) +
                                " shape disagrees with config");
        Sample s;
        s.input = normalize_rows(ds.values, full_series_stats(ds.values));
        s.target = one_hot(*ds.label, head.num_classes);
        if (i < train_n) train_s.push_back(std::move(s));
        else if (i < val_n) val_s.push_back(std::move(s));
        // tail of the corpus is the held-out test set; the caller scores it
    }
    return run_loop(std::move(train_s), std::move(val_s), cfg, head, tc, NormStats{});
}

} // namespace caformer
