#include "peftcl/strategy_l2x.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "peftcl/kernels.hpp"

namespace peftcl {

std::vector<double> score_keys(const std::vector<double>& query,
                               const std::vector<TensorPtr>& keys) {
    const int d = static_cast<int>(query.size());
    const double qn = std::sqrt(kernels::active().dot(query.data(), query.data(), d));
    if (qn == 0.0) throw NumericError("score_keys: zero-norm query");
    std::vector<double> scores;
    scores.reserve(keys.size());
    for (const auto& k : keys) {
        if (k->size() != d) throw ShapeError("key dim mismatch");
        const double kn = std::sqrt(kernels::active().dot(k->ptr(), k->ptr(), d));
        if (kn == 0.0) throw NumericError("score_keys: zero-norm key");
        scores.push_back(kernels::active().dot(query.data(), k->ptr(), d) / (qn * kn));
    }
    return scores;
}

SelectionResult select_topn(const std::vector<double>& scores, int n) {
    const int m = static_cast<int>(scores.size());
    if (n < 1 || n > m) {
        throw ConfigError("select_topn: n=" + std::to_string(n) + " outside [1," +
                          std::to_string(m) + "]");
    }
    std::vector<int> idx(static_cast<size_t>(m));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)]) {
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        }
        return a < b;
    });
    SelectionResult out;
    out.indices.assign(idx.begin(), idx.begin() + n);
    for (int i : out.indices) out.scores.push_back(scores[static_cast<size_t>(i)]);
    return out;
}

L2xStrategy::L2xStrategy(const FrozenBackbone* base, Settings settings, uint64_t seed)
    : base_(base), st_(std::move(settings)), rng_(seed) {
    if (st_.pool_size < 1) throw ConfigError("pool_size must be >= 1");
    if (st_.select_count < 1 || st_.select_count > st_.pool_size) {
        throw ConfigError("select_count must lie in [1, pool_size]");
    }
    if (st_.total_classes < 1) throw ConfigError("l2x strategy needs total_classes >= 1");
    const ViTConfig& cfg = base_->cfg;
    for (int i = 0; i < st_.pool_size; ++i) {
        AdapterSet m;
        m.kind = st_.kind;
        if (st_.kind == AdapterKind::prompt) {
            m.prompt = init_prompt(st_.prompt_len, cfg.dim, rng_,
                                   rng_stream::kPromptInit + static_cast<uint64_t>(i));
        } else {
            m.lora = init_lora(st_.rank, true, true, cfg.dim, cfg.layers, rng_,
                               rng_stream::kLoraInit + static_cast<uint64_t>(i) * 0x100);
        }
        modules_.push_back(std::move(m));

        auto key = Tensor::zeros({cfg.dim}, true);
        rng_.fill_gaussian(key->data(), rng_stream::kPoolKeys + static_cast<uint64_t>(i), 0.0, 1.0);
        const double norm = std::sqrt(
            kernels::active().dot(key->ptr(), key->ptr(), key->size()));
        for (auto& v : key->data()) v /= norm;
        keys_.push_back(std::move(key));
    }
    head_w_ = Tensor::zeros({cfg.dim, st_.total_classes}, true);
    rng_.fill_gaussian(head_w_->data(), rng_stream::kHeadInit + 0xAB, 0.0, 0.02);
    head_b_ = Tensor::zeros({st_.total_classes}, true);
    seen_classes_.assign(static_cast<size_t>(st_.total_classes), 0);
}

std::vector<double> L2xStrategy::query_feature(const Sample& sample) const {
    auto patches = image_to_patches(base_->cfg, sample.pixels);
    auto seq = patchify_embed(nullptr, base_->cfg, base_->params, patches);
    return vit_forward(nullptr, base_->cfg, base_->params, seq)->data();
}

SelectionResult L2xStrategy::select(const std::vector<double>& query) const {
    return select_topn(score_keys(query, keys_), st_.select_count);
}

TensorPtr L2xStrategy::adapted_feature(Tape* tape, const TensorPtr& patch_matrix,
                                       const SelectionResult& sel) const {
    auto seq = patchify_embed(tape, base_->cfg, base_->params, patch_matrix);
    if (st_.kind == AdapterKind::prompt) {
        // concatenate in descending-score order before the input
        std::vector<const PromptParams*> prompts;
        prompts.reserve(sel.indices.size());
        for (int i : sel.indices) prompts.push_back(&*modules_[static_cast<size_t>(i)].prompt);
        seq = prepend_prompt(tape, prompts, seq);
        return vit_forward(tape, base_->cfg, base_->params, seq);
    }
    LoraStack stack;
    for (int i : sel.indices) stack.modules.push_back(&*modules_[static_cast<size_t>(i)].lora);
    return vit_forward(tape, base_->cfg, base_->params, seq, stack);
}

void L2xStrategy::train_task(const TaskData& task) {
    const ViTConfig& cfg = base_->cfg;
    const int t = tasks_seen_;

    std::vector<uint8_t> mask(static_cast<size_t>(st_.total_classes), 0);
    for (int c : task.class_set) {
        if (c < 0 || c >= st_.total_classes) throw ConfigError("class id outside universe");
        mask[static_cast<size_t>(c)] = 1;
        seen_classes_[static_cast<size_t>(c)] = 1;
    }

    std::vector<int> labels(task.train.size());
    for (size_t i = 0; i < task.train.size(); ++i) labels[i] = task.train[i].label;

    auto patch_mats = train_util::patchify_all(cfg, task.train);
    // selection depends only on frozen features, so per-sample queries and
    // scores can be computed once per task
    std::vector<std::vector<double>> queries(task.train.size());
    for (size_t i = 0; i < task.train.size(); ++i) queries[i] = query_feature(task.train[i]);

    Optimizer opt(st_.train.opt);
    const int n = static_cast<int>(task.train.size());
    for (int epoch = 0; epoch < st_.train.epochs; ++epoch) {
        opt.set_schedule_step(epoch);
        auto order = train_util::epoch_order(n, rng_, t, epoch);
        for (int start = 0; start < n; start += st_.train.batch_size) {
            const int end = std::min(n, start + st_.train.batch_size);
            const int bsz = end - start;
            Tape tape;
            std::vector<TensorPtr> feats;
            std::vector<int> batch_labels;
            std::set<int> active_modules;
            TensorPtr penalty;
            for (int bi = start; bi < end; ++bi) {
                const int i = order[static_cast<size_t>(bi)];
                auto sel = select(queries[static_cast<size_t>(i)]);
                for (int m : sel.indices) active_modules.insert(m);
                feats.push_back(adapted_feature(&tape, patch_mats[static_cast<size_t>(i)], sel));
                batch_labels.push_back(labels[static_cast<size_t>(i)]);

                std::vector<TensorPtr> sel_keys;
                for (int m : sel.indices) sel_keys.push_back(keys_[static_cast<size_t>(m)]);
                auto p = ops::key_alignment_penalty(&tape, sel_keys, queries[static_cast<size_t>(i)],
                                                    st_.raw_gamma_surrogate);
                penalty = penalty ? ops::add(&tape, penalty, p) : p;
            }
            auto batch = train_util::stack_features(&tape, feats);
            auto logits = ops::add_rowvec(&tape, ops::matmul(&tape, batch, head_w_), head_b_);
            auto ce = ops::cross_entropy_masked(&tape, logits, batch_labels, mask);
            auto loss = ops::add(&tape, ce, ops::scale(&tape, penalty, st_.lambda / bsz));

            // only the participants step: selected modules, their keys, head
            std::vector<TensorPtr> participating;
            for (int m : active_modules) {
                auto mt = modules_[static_cast<size_t>(m)].tensors();
                participating.insert(participating.end(), mt.begin(), mt.end());
                participating.push_back(keys_[static_cast<size_t>(m)]);
            }
            participating.push_back(head_w_);
            participating.push_back(head_b_);

            for (auto& m : modules_) {
                for (auto& p : m.tensors()) p->zero_grad();
            }
            for (auto& k : keys_) k->zero_grad();
            head_w_->zero_grad();
            head_b_->zero_grad();
            tape.backward(loss);
            opt.step(participating);
            loss_curve_.emplace_back(global_step_++, loss->item());
        }
    }
    ++tasks_seen_;
}

int L2xStrategy::predict(const Sample& sample) const {
    auto query = query_feature(sample);
    auto sel = select(query);
    auto patches = image_to_patches(base_->cfg, sample.pixels);
    auto feat = adapted_feature(nullptr, patches, sel);
    auto logits = classify(nullptr, feat, head_w_, head_b_);
    return train_util::masked_argmax(logits->ptr(), st_.total_classes, seen_classes_);
}

}  // namespace peftcl
