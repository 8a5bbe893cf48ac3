#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "peftcl/kernels.hpp"
#include "peftcl/strategy_l2x.hpp"
#include "test_util.hpp"

using namespace peftcl;

namespace {

FrozenBackbone make_backbone(uint64_t seed) {
    ViTConfig cfg;
    cfg.image_h = cfg.image_w = 8;
    cfg.channels = 3;
    cfg.patch = 4;
    cfg.dim = 16;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.ffn = 32;
    cfg.classes = 10;
    cfg.attn_scale = AttnScale::standard;
    cfg.ffn_double_gelu = false;
    FrozenBackbone base{cfg, ViTParams::init(cfg, Rng(seed), rng_stream::kBackboneInit)};
    base.params.set_backbone_trainable(false);
    base.params.set_head_trainable(false);
    return base;
}

MaterializedStream tiny_stream(uint64_t seed) {
    StreamSpec spec;
    spec.scenario = Scenario::cil;
    spec.num_tasks = 2;
    spec.num_classes = 4;
    spec.image_h = spec.image_w = 8;
    spec.train_per_class = 6;
    spec.test_per_class = 3;
    spec.with_pretext = false;
    return make_stream(spec, seed);
}

L2xStrategy::Settings fast_settings(AdapterKind kind) {
    L2xStrategy::Settings st;
    st.kind = kind;
    st.scenario = Scenario::cil;
    st.pool_size = 6;
    st.select_count = 2;
    st.lambda = 0.1;
    st.prompt_len = 3;
    st.rank = 1;
    st.total_classes = 4;
    st.train.epochs = 2;
    st.train.batch_size = 8;
    st.train.opt.lr = 0.01;
    return st;
}

}  // namespace

TEST_CASE("pool init: sizes, unit keys, reproducibility") {
    auto base = make_backbone(1);
    L2xStrategy a(&base, fast_settings(AdapterKind::prompt), 7);
    L2xStrategy b(&base, fast_settings(AdapterKind::prompt), 7);
    CHECK(a.keys().size() == 6);
    CHECK(a.modules().size() == 6);
    for (size_t i = 0; i < a.keys().size(); ++i) {
        const auto& k = a.keys()[i];
        const double norm = std::sqrt(kernels::active().dot(k->ptr(), k->ptr(), k->size()));
        CHECK(std::fabs(norm - 1.0) < 1e-12);
        CHECK(k->data() == b.keys()[i]->data());
        CHECK(a.modules()[i].prompt->tokens->data() == b.modules()[i].prompt->tokens->data());
        CHECK_FALSE(a.modules()[i].head.has_value());
    }
}

TEST_CASE("score_keys: parallel, orthogonal, antiparallel, zero query") {
    std::vector<TensorPtr> keys{
        Tensor::from({3}, {2, 0, 0}),
        Tensor::from({3}, {0, 5, 0}),
        Tensor::from({3}, {-1, 0, 0}),
    };
    std::vector<double> q{0.5, 0.0, 0.0};
    auto s = score_keys(q, keys);
    CHECK(s[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s[2] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK_THROWS_AS(score_keys({0, 0, 0}, keys), NumericError);
}

TEST_CASE("select_topn ordering and tie-breaks") {
    auto all = select_topn({0.3, 0.9, -0.2}, 3);
    CHECK(all.indices == std::vector<int>({1, 0, 2}));
    CHECK(all.scores[0] == 0.9);

    auto two = select_topn({-1.0, 0.0, 1.0}, 2);
    CHECK(two.indices == std::vector<int>({2, 1}));

    auto tie = select_topn({0.5, 0.7, 0.5, 0.7}, 3);
    CHECK(tie.indices == std::vector<int>({1, 3, 0}));  // ties -> lower index first

    CHECK_THROWS_AS(select_topn({0.1}, 2), ConfigError);

    // top-N invariant under positive monotone rescaling
    std::vector<double> scores{0.2, -0.4, 0.9, 0.1};
    auto before = select_topn(scores, 2);
    for (auto& v : scores) v = 2.0 * v + 0.5;
    auto after = select_topn(scores, 2);
    CHECK(before.indices == after.indices);
}

TEST_CASE("selection is deterministic and concatenation follows score order") {
    auto base = make_backbone(2);
    auto st = fast_settings(AdapterKind::prompt);
    L2xStrategy strat(&base, st, 9);
    auto stream = tiny_stream(3);
    const auto& s0 = stream.tasks[0].train[0];

    auto q = strat.query_feature(s0);
    auto sel1 = strat.select(q);
    auto sel2 = strat.select(q);
    CHECK(sel1.indices == sel2.indices);
    CHECK(sel1.scores == sel2.scores);
    for (size_t i = 1; i < sel1.scores.size(); ++i) CHECK(sel1.scores[i - 1] >= sel1.scores[i]);
}

TEST_CASE("all-zero increments reproduce the frozen forward; N=1 equals single-adapter") {
    auto base = make_backbone(4);
    auto st = fast_settings(AdapterKind::lora);
    st.pool_size = 3;
    st.select_count = 3;
    L2xStrategy strat(&base, st, 11);  // untrained: every B is zero
    auto stream = tiny_stream(5);
    const auto& s0 = stream.tasks[0].train[0];

    auto patches = image_to_patches(base.cfg, s0.pixels);
    auto seq = patchify_embed(nullptr, base.cfg, base.params, patches);
    auto frozen = vit_forward(nullptr, base.cfg, base.params, seq);

    auto sel = strat.select(strat.query_feature(s0));
    // adapted_feature is private; predict exercises it, so compare features
    // via the public path: logits of frozen features vs strategy prediction
    auto logits_frozen = classify(nullptr, frozen, strat.head_w(), strat.head_b());
    // reconstruct the adapted feature through a single-module stack
    LoraStack stack;
    for (int i : sel.indices) stack.modules.push_back(&*strat.modules()[static_cast<size_t>(i)].lora);
    auto adapted = vit_forward(nullptr, base.cfg, base.params, seq, stack);
    CHECK(adapted->data() == frozen->data());  // bitwise: B = 0

    LoraStack one;
    one.modules.push_back(&*strat.modules()[0].lora);
    auto single = vit_forward(nullptr, base.cfg, base.params, seq, one);
    CHECK(single->data() == frozen->data());
    CHECK(logits_frozen->size() == 4);
}

TEST_CASE("gradient isolation: only selected modules, their keys, and the head move") {
    auto base = make_backbone(6);
    auto st = fast_settings(AdapterKind::lora);
    st.pool_size = 5;
    st.select_count = 2;
    st.train.epochs = 1;
    st.train.batch_size = 64;  // one step
    L2xStrategy strat(&base, st, 13);
    auto stream = tiny_stream(7);

    // snapshot everything
    std::vector<std::vector<double>> key_snap, mod_snap;
    for (const auto& k : strat.keys()) key_snap.push_back(k->data());
    for (const auto& m : strat.modules()) {
        for (const auto& t : m.tensors()) mod_snap.push_back(t->data());
    }
    // which modules will the task select?
    std::set<int> active;
    for (const auto& s : stream.tasks[0].train) {
        for (int i : strat.select(strat.query_feature(s)).indices) active.insert(i);
    }
    REQUIRE(active.size() < 5);  // some module must stay untouched for the check

    strat.train_task(stream.tasks[0]);

    size_t mi = 0;
    for (size_t m = 0; m < strat.modules().size(); ++m) {
        const bool touched = active.count(static_cast<int>(m)) > 0;
        bool changed = false;
        for (const auto& t : strat.modules()[m].tensors()) {
            if (t->data() != mod_snap[mi++]) changed = true;
        }
        CHECK(changed == touched);
        if (touched) {
            CHECK(strat.keys()[m]->data() != key_snap[m]);
        } else {
            CHECK(strat.keys()[m]->data() == key_snap[m]);  // bitwise
        }
    }
}

TEST_CASE("selected keys move toward their queries") {
    auto base = make_backbone(8);
    auto st = fast_settings(AdapterKind::lora);
    st.train.epochs = 1;
    st.train.batch_size = 64;
    st.train.opt.lr = 0.005;
    st.train.opt.momentum = 0.0;
    L2xStrategy strat(&base, st, 15);
    auto stream = tiny_stream(9);

    const auto& probe = stream.tasks[0].train[0];
    auto q = strat.query_feature(probe);
    auto before = strat.select(q);
    std::vector<double> cos_before = before.scores;

    strat.train_task(stream.tasks[0]);

    auto scores_after = score_keys(q, strat.keys());
    for (size_t j = 0; j < before.indices.size(); ++j) {
        CHECK(scores_after[static_cast<size_t>(before.indices[j])] > cos_before[j]);
    }
}

TEST_CASE("pool size is constant across tasks and prediction stays in seen classes") {
    auto base = make_backbone(10);
    auto st = fast_settings(AdapterKind::prompt);
    L2xStrategy strat(&base, st, 17);
    auto stream = tiny_stream(11);
    strat.train_task(stream.tasks[0]);
    CHECK(strat.modules().size() == 6);
    for (const auto& s : stream.tasks[1].test) {
        const int label = strat.predict(s);
        CHECK(label >= 0);
        CHECK(label < 2);  // only task-0 classes seen
        CHECK(strat.predict(s) == label);
    }
    strat.train_task(stream.tasks[1]);
    CHECK(strat.modules().size() == 6);
    CHECK(strat.tasks_trained() == 2);
}

TEST_CASE("pool of one with zero lambda degenerates to plain lora fine-tuning") {
    auto base = make_backbone(12);
    auto st = fast_settings(AdapterKind::lora);
    st.pool_size = 1;
    st.select_count = 1;
    st.lambda = 0.0;
    st.train.epochs = 2;
    st.train.batch_size = 4;
    st.train.opt.lr = 0.02;
    L2xStrategy strat(&base, st, 19);
    auto stream = tiny_stream(13);

    // reference: identical init, identical batches, plain single-adapter loop
    LoraParams ref_lora;
    ref_lora.rank = st.rank;
    ref_lora.alpha = st.rank;
    for (const auto& pr : strat.modules()[0].lora->q) {
        ref_lora.q.push_back({Tensor::from(pr.a->shape(), pr.a->data(), true),
                              Tensor::from(pr.b->shape(), pr.b->data(), true)});
    }
    for (const auto& pr : strat.modules()[0].lora->v) {
        ref_lora.v.push_back({Tensor::from(pr.a->shape(), pr.a->data(), true),
                              Tensor::from(pr.b->shape(), pr.b->data(), true)});
    }
    auto ref_w = Tensor::from(strat.head_w()->shape(), strat.head_w()->data(), true);
    auto ref_b = Tensor::from(strat.head_b()->shape(), strat.head_b()->data(), true);

    const auto& task = stream.tasks[0];
    std::vector<uint8_t> mask(4, 0);
    for (int c : task.class_set) mask[static_cast<size_t>(c)] = 1;
    auto patch_mats = train_util::patchify_all(base.cfg, task.train);

    std::vector<double> ref_losses;
    Optimizer opt(st.train.opt);
    std::vector<TensorPtr> trainable = ref_lora.tensors();
    trainable.push_back(ref_w);
    trainable.push_back(ref_b);
    LoraStack stack;
    stack.modules.push_back(&ref_lora);
    const int n = static_cast<int>(task.train.size());
    Rng rng(19);  // same seed the strategy got
    for (int epoch = 0; epoch < st.train.epochs; ++epoch) {
        opt.set_schedule_step(epoch);
        auto order = train_util::epoch_order(n, rng, 0, epoch);
        for (int start = 0; start < n; start += st.train.batch_size) {
            const int end = std::min(n, start + st.train.batch_size);
            Tape tape;
            std::vector<TensorPtr> feats;
            std::vector<int> labels;
            for (int bi = start; bi < end; ++bi) {
                const int i = order[static_cast<size_t>(bi)];
                auto seq = patchify_embed(&tape, base.cfg, base.params, patch_mats[static_cast<size_t>(i)]);
                feats.push_back(vit_forward(&tape, base.cfg, base.params, seq, stack));
                labels.push_back(task.train[static_cast<size_t>(i)].label);
            }
            auto batch = train_util::stack_features(&tape, feats);
            auto logits = ops::add_rowvec(&tape, ops::matmul(&tape, batch, ref_w), ref_b);
            auto loss = ops::cross_entropy_masked(&tape, logits, labels, mask);
            for (auto& p : trainable) p->zero_grad();
            tape.backward(loss);
            opt.step(trainable);
            ref_losses.push_back(loss->item());
        }
    }

    strat.train_task(task);
    REQUIRE(strat.loss_curve().size() == ref_losses.size());
    for (size_t i = 0; i < ref_losses.size(); ++i) {
        CHECK(std::fabs(strat.loss_curve()[i].second - ref_losses[i]) < 1e-10);
    }
}
