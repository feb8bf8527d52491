#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "caformer/training.hpp"

using namespace caformer;
using tape::Tape;
using tape::Var;

namespace {

// Small-but-real model: N = (16-8)/4 + 2 = 4 patches.
CaformerConfig micro_cfg(std::size_t M) {
    CaformerConfig cfg;
    cfg.M = M;
    cfg.L_in = 16;
    cfg.P = 8;
    cfg.S = 4;
    cfg.E = 4;
    cfg.k = 4;
    cfg.blocks = 1;
    return cfg;
}

SeriesDataset micro_series(std::size_t M, std::size_t L, std::uint64_t seed) {
    auto sets = synth_generate("coupled_ar", M, L, seed);
    SeriesDataset ds = std::move(sets[0]);
    ds.train_end = L / 2;
    ds.val_end = (3 * L) / 4;
    return ds;
}

bool params_equal(const ParamStore& a, const ParamStore& b) {
    if (a.count() != b.count()) return false;
    for (std::size_t i = 0; i < a.items().size(); ++i) {
        if (a.items()[i].first != b.items()[i].first) return false;
        const NdArray& x = a.items()[i].second;
        const NdArray& y = b.items()[i].second;
        if (x.size() != y.size()) return false;
        if (std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

} // namespace

TEST_CASE("loss names round-trip") {
    for (const char* name : {"mse", "smape", "cross_entropy"})
        CHECK(std::string(loss_name(loss_from_string(name))) == name);
    CHECK_THROWS_AS(loss_from_string("huber"), ContractError);
}

TEST_CASE("train config validation ties classification to cross-entropy") {
    TrainConfig tc;
    tc.task = Task::classification;
    tc.loss = LossKind::mse;
    CHECK_THROWS_AS(tc.validate(), ContractError);
    tc.loss = LossKind::cross_entropy;
    tc.validate();

    tc.task = Task::long_forecast;
    CHECK_THROWS_AS(tc.validate(), ContractError); // cross_entropy off-task
    tc.loss = LossKind::mse;
    tc.validate();

    tc.learning_rate = 0.0;
    CHECK_THROWS_AS(tc.validate(), ContractError);
    tc.learning_rate = 1e-3;
    tc.epochs = 0;
    CHECK_THROWS_AS(tc.validate(), ContractError);
    tc.epochs = 1;
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), ContractError);
}

TEST_CASE("mse loss: hand values and mask restriction") {
    {
        Tape t;
        Var pred = t.constant(NdArray({2}, {0.0, 0.0}));
        Var target = t.constant(NdArray({2}, {1.0, -1.0}));
        Var l = loss_fn(t, pred, target, std::nullopt, LossKind::mse);
        CHECK(l.value()[0] == 1.0);
    }
    {
        // mask selects half the entries; the mean runs over those only
        Tape t;
        Var pred = t.constant(NdArray({4}, {0.0, 0.0, 0.0, 0.0}));
        Var target = t.constant(NdArray({4}, {2.0, 4.0, 6.0, 8.0}));
        NdArray mask({4}, {1.0, 1.0, 0.0, 0.0});
        Var l = loss_fn(t, pred, target, mask, LossKind::mse);
        CHECK(l.value()[0] == 10.0); // (4 + 16) / 2
    }
    {
        Tape t;
        Var pred = t.constant(NdArray({2}, {0.0, 0.0}));
        Var target = t.constant(NdArray({2}, {1.0, 1.0}));
        NdArray empty_mask({2}, {0.0, 0.0});
        CHECK_THROWS_AS(loss_fn(t, pred, target, empty_mask, LossKind::mse), ContractError);
        NdArray bad_mask({3}, {1.0, 1.0, 1.0});
        CHECK_THROWS_AS(loss_fn(t, pred, target, bad_mask, LossKind::mse), ContractError);
        Var short_target = t.constant(NdArray({3}, {1.0, 1.0, 1.0}));
        CHECK_THROWS_AS(loss_fn(t, pred, short_target, std::nullopt, LossKind::mse),
                        ContractError);
    }
}

TEST_CASE("smape loss matches the 0..200 convention") {
    Tape t;
    Var pred = t.constant(NdArray({1}, {110.0}));
    Var target = t.constant(NdArray({1}, {100.0}));
    Var l = loss_fn(t, pred, target, std::nullopt, LossKind::smape);
    CHECK(l.value()[0] == doctest::Approx(2000.0 / 210.0).epsilon(1e-8));

    Var zs = t.constant(NdArray({1}, {0.0}));
    Var l0 = loss_fn(t, zs, zs, std::nullopt, LossKind::smape);
    CHECK(l0.value()[0] == 0.0); // the denominator guard keeps 0/0 at zero
}

TEST_CASE("cross-entropy loss: uniform logits, mask rejection") {
    Tape t;
    Var logits = t.constant(NdArray({2}, {0.0, 0.0}));
    Var onehot = t.constant(NdArray({2}, {1.0, 0.0}));
    Var l = loss_fn(t, logits, onehot, std::nullopt, LossKind::cross_entropy);
    CHECK(l.value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    NdArray mask({2}, {1.0, 1.0});
    CHECK_THROWS_AS(loss_fn(t, logits, onehot, mask, LossKind::cross_entropy), ContractError);
}

TEST_CASE("adam: bias-corrected first steps by hand") {
    ParamStore p;
    p.add("w", NdArray({1}, {1.0}));
    std::map<std::string, NdArray> grads;
    grads["w"] = NdArray({1}, {1.0});

    Adam opt;
    opt.lr = 0.1;
    opt.step(p, grads);
    // first step: mhat = vhat = 1, so the update is lr / (1 + eps)
    CHECK(p.at("w")[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    opt.step(p, grads);
    // identical gradient keeps mhat = vhat = 1: another full step
    CHECK(p.at("w")[0] == doctest::Approx(1.0 - 0.2 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(opt.step_count == 2);
}

TEST_CASE("adam: zero learning rate leaves parameters untouched") {
    ParamStore p;
    Rng rng(1);
    p.add("w", init_weight(rng, 4, 4));
    NdArray before = p.at("w");
    std::map<std::string, NdArray> grads;
    grads["w"] = init_weight(rng, 4, 4);

    Adam opt;
    opt.lr = 0.0;
    opt.step(p, grads);
    const NdArray& after = p.at("w");
    CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(double)) == 0);

    std::map<std::string, NdArray> missing;
    CHECK_THROWS_AS(opt.step(p, missing), ContractError);
}

TEST_CASE("full-series stats: population moments with a sigma floor") {
    NdArray v({2, 4}, {1, 2, 3, 4, 5, 5, 5, 5});
    NormStats st = full_series_stats(v);
    CHECK(st.mean[0] == doctest::Approx(2.5));
    CHECK(st.sigma[0] == doctest::Approx(std::sqrt(1.25)).epsilon(1e-12));
    CHECK(st.mean[1] == 5.0);
    CHECK(st.sigma[1] == 1e-8); // constant row floors at eps
}

TEST_CASE("model_forward: per-task output shapes and input masking") {
    CaformerConfig cfg = micro_cfg(2);
    Rng data_rng(3);
    NdArray input = NdArray::zeros({2, 16});
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = data_rng.normal();

    HeadConfig fh;
    fh.task = Task::long_forecast;
    fh.H = 8;
    ParamStore fp;
    Rng r1(5);
    init_backbone_params(fp, cfg, r1);
    init_head_params(fp, cfg, fh, r1);
    {
        Tape t;
        auto leaves = fp.leaves(t);
        Var out = model_forward(t, leaves, cfg, fh, Ablation::full, input);
        CHECK(out.shape() == Shape{2, 8});
    }
    {
        // a full input mask zeroes everything fed to the backbone, so the
        // output must match an explicit zero input
        Tape t;
        auto leaves = fp.leaves(t);
        NdArray all_ones = NdArray::full({2, 16}, 1.0);
        Var masked = model_forward(t, leaves, cfg, fh, Ablation::full, input, &all_ones);
        Tape t2;
        auto leaves2 = fp.leaves(t2);
        Var zeroed = model_forward(t2, leaves2, cfg, fh, Ablation::full, NdArray::zeros({2, 16}));
        for (std::size_t i = 0; i < masked.value().size(); ++i)
            CHECK(masked.value()[i] == zeroed.value()[i]);
    }

    HeadConfig rh;
    rh.task = Task::imputation;
    ParamStore rp;
    Rng r2(5);
    init_backbone_params(rp, cfg, r2);
    init_head_params(rp, cfg, rh, r2);
    {
        Tape t;
        auto leaves = rp.leaves(t);
        Var out = model_forward(t, leaves, cfg, rh, Ablation::full, input);
        CHECK(out.shape() == Shape{2, 16});
    }

    HeadConfig ch;
    ch.task = Task::classification;
    ch.num_classes = 3;
    ParamStore cp;
    Rng r3(5);
    init_backbone_params(cp, cfg, r3);
    init_head_params(cp, cfg, ch, r3);
    {
        Tape t;
        auto leaves = cp.leaves(t);
        Var out = model_forward(t, leaves, cfg, ch, Ablation::full, input);
        CHECK(out.shape() == Shape{3});
    }

    // wrong input shape is a contract violation
    Tape t;
    auto leaves = fp.leaves(t);
    CHECK_THROWS_AS(model_forward(t, leaves, cfg, fh, Ablation::full, NdArray::zeros({2, 20})),
                    ContractError);
}

TEST_CASE("batch loss is the mean of per-sample losses") {
    CaformerConfig cfg = micro_cfg(2);
    HeadConfig head;
    head.task = Task::long_forecast;
    head.H = 8;
    ParamStore p;
    Rng rng(13);
    init_backbone_params(p, cfg, rng);
    init_head_params(p, cfg, head, rng);

    NdArray in1 = NdArray::zeros({2, 16}), in2 = NdArray::zeros({2, 16});
    NdArray tg1 = NdArray::zeros({2, 8}), tg2 = NdArray::zeros({2, 8});
    for (std::size_t i = 0; i < in1.size(); ++i) {
        in1[i] = rng.normal();
        in2[i] = rng.normal();
    }
    for (std::size_t i = 0; i < tg1.size(); ++i) {
        tg1[i] = rng.normal();
        tg2[i] = rng.normal();
    }

    auto single = [&](const NdArray& in, const NdArray& tg) {
        Tape t;
        auto leaves = p.leaves(t);
        Var out = model_forward(t, leaves, cfg, head, Ablation::full, in);
        return loss_fn(t, out, t.constant(tg), std::nullopt, LossKind::mse).value()[0];
    };
    const double l1 = single(in1, tg1);
    const double l2 = single(in2, tg2);

    Tape t;
    auto leaves = p.leaves(t);
    Var o1 = model_forward(t, leaves, cfg, head, Ablation::full, in1);
    Var a = loss_fn(t, o1, t.constant(tg1), std::nullopt, LossKind::mse);
    Var o2 = model_forward(t, leaves, cfg, head, Ablation::full, in2);
    Var b = loss_fn(t, o2, t.constant(tg2), std::nullopt, LossKind::mse);
    const double batch = t.scale(t.add(a, b), 0.5).value()[0];
    CHECK(batch == doctest::Approx(0.5 * (l1 + l2)).epsilon(1e-10));
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
    CaformerConfig cfg = micro_cfg(2);
    HeadConfig head;
    head.task = Task::long_forecast;
    head.H = 8;
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 8;
    tc.learning_rate = 1e-3;
    tc.seed = 17;
    SeriesDataset ds = micro_series(2, 100, 23);

    TrainResult a = train(ds, cfg, head, tc);
    TrainResult b = train(ds, cfg, head, tc);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].train_loss == b.log[i].train_loss);
        CHECK(a.log[i].val_loss == b.log[i].val_loss);
    }
    CHECK(params_equal(a.params, b.params));

    tc.seed = 18;
    TrainResult c = train(ds, cfg, head, tc);
    CHECK_FALSE(params_equal(a.params, c.params));
}

TEST_CASE("early stopping fires after patience stale epochs") {
    // A learning rate this small leaves parameters bitwise unchanged, so the
    // validation loss can never improve after epoch 1.
    CaformerConfig cfg = micro_cfg(2);
    HeadConfig head;
    head.task = Task::long_forecast;
    head.H = 8;
    TrainConfig tc;
    tc.epochs = 10;
    tc.batch_size = 8;
    tc.learning_rate = 1e-300;
    tc.patience = 1;
    tc.seed = 3;
    SeriesDataset ds = micro_series(2, 100, 29);

    TrainResult r = train(ds, cfg, head, tc);
    CHECK(r.log.size() == 2); // epoch 1 improves from infinity, epoch 2 is stale
    CHECK(r.best_epoch == 1);
    CHECK(r.best_val == r.log[0].val_loss);
}

TEST_CASE("train rejects misrouted tasks") {
    CaformerConfig cfg = micro_cfg(2);
    SeriesDataset ds = micro_series(2, 100, 31);
    HeadConfig head;
    head.task = Task::long_forecast;
    head.H = 8;
    TrainConfig tc;
    tc.task = Task::imputation; // disagrees with the head
    CHECK_THROWS_AS(train(ds, cfg, head, tc), ContractError);

    HeadConfig cls;
    cls.task = Task::classification;
    cls.num_classes = 2;
    TrainConfig ctc;
    ctc.task = Task::classification;
    ctc.loss = LossKind::cross_entropy;
    CHECK_THROWS_AS(train(ds, cfg, cls, ctc), ContractError); // needs train_classifier
}

TEST_CASE("corpus split is 70/10/20 by rounding") {
    CHECK(corpus_split(10) == std::pair<std::size_t, std::size_t>{7, 8});
    CHECK(corpus_split(200) == std::pair<std::size_t, std::size_t>{140, 160});
    CHECK(corpus_split(5) == std::pair<std::size_t, std::size_t>{4, 4});
}

TEST_CASE("classifier training runs over a labelled corpus") {
    CaformerConfig cfg;
    cfg.M = 2;
    cfg.L_in = 64; // the generator's minimum series length
    cfg.P = 16;
    cfg.S = 8;
    cfg.E = 4;
    cfg.k = 8;
    cfg.blocks = 1;
    SynthParams sp;
    sp.n_series = 10;
    sp.noise = 0.05;
    auto corpus = synth_generate("two_class", 2, 64, 41, sp);
    REQUIRE(corpus.size() == 10);

    HeadConfig head;
    head.task = Task::classification;
    head.num_classes = 2;
    TrainConfig tc;
    tc.task = Task::classification;
    tc.loss = LossKind::cross_entropy;
    tc.epochs = 2;
    tc.batch_size = 4;
    tc.seed = 5;

    TrainResult r = train_classifier(corpus, cfg, head, tc);
    CHECK(r.log.size() >= 1);
    for (const EpochRecord& e : r.log) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(std::isfinite(e.val_loss));
    }

    auto unlabelled = corpus;
    for (SeriesDataset& ds : unlabelled) ds.label.reset();
    CHECK_THROWS_AS(train_classifier(unlabelled, cfg, head, tc), ContractError);
    CHECK_THROWS_AS(train_classifier({corpus[0]}, cfg, head, tc), ContractError);
}
