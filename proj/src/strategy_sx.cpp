#include "peftcl/strategy_sx.hpp"

#include <algorithm>
#include <limits>

namespace peftcl {

SxStrategy::SxStrategy(const FrozenBackbone* base, Settings settings, uint64_t seed)
    : base_(base), st_(std::move(settings)), rng_(seed) {
    if (st_.total_classes < 1) throw ConfigError("sx strategy needs total_classes >= 1");
    if (st_.shared_head) {
        shared_w_ = Tensor::zeros({base_->cfg.dim, st_.total_classes}, true);
        rng_.fill_gaussian(shared_w_->data(), rng_stream::kHeadInit + 0xFF, 0.0, 0.02);
        shared_b_ = Tensor::zeros({st_.total_classes}, true);
        seen_classes_.assign(static_cast<size_t>(st_.total_classes), 0);
    }
}

int SxStrategy::clusters_for(const TaskData& task) const {
    if (st_.clusters > 0) return st_.clusters;
    if (st_.scenario == Scenario::dil) return 5;
    return 2 * static_cast<int>(task.class_set.size());
}

TensorPtr SxStrategy::expert_feature(Tape* tape, const TensorPtr& patch_matrix, int expert) const {
    const AdapterSet& set = experts_[static_cast<size_t>(expert)];
    auto seq = patchify_embed(tape, base_->cfg, base_->params, patch_matrix);
    if (set.kind == AdapterKind::prompt) {
        seq = prepend_prompt(tape, *set.prompt, seq);
        return vit_forward(tape, base_->cfg, base_->params, seq);
    }
    LoraStack stack;
    stack.modules.push_back(&*set.lora);
    return vit_forward(tape, base_->cfg, base_->params, seq, stack);
}

std::vector<double> SxStrategy::extract_feature(const Sample& sample) const {
    auto patches = image_to_patches(base_->cfg, sample.pixels);
    TensorPtr feat;
    if (extractor_expert_ >= 0) {
        feat = expert_feature(nullptr, patches, extractor_expert_);
    } else {
        auto seq = patchify_embed(nullptr, base_->cfg, base_->params, patches);
        feat = vit_forward(nullptr, base_->cfg, base_->params, seq);
    }
    return feat->data();
}

void SxStrategy::train_task(const TaskData& task) {
    const int t = tasks_trained();
    const ViTConfig& cfg = base_->cfg;

    AdapterSet expert;
    expert.kind = st_.kind;
    if (st_.kind == AdapterKind::prompt) {
        expert.prompt = init_prompt(st_.prompt_len, cfg.dim, rng_,
                                    rng_stream::kPromptInit + static_cast<uint64_t>(t));
    } else {
        expert.lora = init_lora(st_.rank, true, true, cfg.dim, cfg.layers, rng_,
                                rng_stream::kLoraInit + static_cast<uint64_t>(t) * 0x100);
    }

    // label mapping: per-expert heads use local columns, the shared head uses
    // global ids with absent classes masked during training
    const int n_classes = st_.shared_head ? st_.total_classes
                                          : static_cast<int>(task.class_set.size());
    std::vector<uint8_t> mask(static_cast<size_t>(n_classes), st_.shared_head ? 0 : 1);
    if (st_.shared_head) {
        for (int c : task.class_set) {
            if (c < 0 || c >= st_.total_classes) throw ConfigError("class id outside universe");
            mask[static_cast<size_t>(c)] = 1;
            seen_classes_[static_cast<size_t>(c)] = 1;
        }
    } else {
        ClassifierHead head;
        head.w = Tensor::zeros({cfg.dim, n_classes}, true);
        rng_.fill_gaussian(head.w->data(), rng_stream::kHeadInit + static_cast<uint64_t>(t), 0.0,
                           0.02);
        head.b = Tensor::zeros({n_classes}, true);
        head.classes = task.class_set;
        expert.head = std::move(head);
    }

    std::vector<TensorPtr> trainable = expert.tensors();
    TensorPtr head_w = st_.shared_head ? shared_w_ : expert.head->w;
    TensorPtr head_b = st_.shared_head ? shared_b_ : expert.head->b;
    if (st_.shared_head) {
        trainable.push_back(shared_w_);
        trainable.push_back(shared_b_);
    }

    std::vector<int> labels(task.train.size());
    for (size_t i = 0; i < task.train.size(); ++i) {
        const int global = task.train[i].label;
        if (st_.shared_head) {
            labels[i] = global;
        } else {
            const auto it = std::find(task.class_set.begin(), task.class_set.end(), global);
            if (it == task.class_set.end()) throw ContractError("label outside task class set");
            labels[i] = static_cast<int>(it - task.class_set.begin());
        }
    }

    auto patch_mats = train_util::patchify_all(cfg, task.train);
    Optimizer opt(st_.train.opt);
    LoraStack stack;
    if (st_.kind == AdapterKind::lora) stack.modules.push_back(&*expert.lora);

    const int n = static_cast<int>(task.train.size());
    for (int epoch = 0; epoch < st_.train.epochs; ++epoch) {
        opt.set_schedule_step(epoch);
        auto order = train_util::epoch_order(n, rng_, t, epoch);
        for (int start = 0; start < n; start += st_.train.batch_size) {
            const int end = std::min(n, start + st_.train.batch_size);
            Tape tape;
            std::vector<TensorPtr> feats;
            std::vector<int> batch_labels;
            feats.reserve(static_cast<size_t>(end - start));
            for (int bi = start; bi < end; ++bi) {
                const int i = order[static_cast<size_t>(bi)];
                auto seq = patchify_embed(&tape, cfg, base_->params, patch_mats[static_cast<size_t>(i)]);
                if (st_.kind == AdapterKind::prompt) {
                    seq = prepend_prompt(&tape, *expert.prompt, seq);
                    feats.push_back(vit_forward(&tape, cfg, base_->params, seq));
                } else {
                    feats.push_back(vit_forward(&tape, cfg, base_->params, seq, stack));
                }
                batch_labels.push_back(labels[static_cast<size_t>(i)]);
            }
            auto batch = train_util::stack_features(&tape, feats);
            auto logits = ops::add_rowvec(&tape, ops::matmul(&tape, batch, head_w), head_b);
            auto loss = ops::cross_entropy_masked(&tape, logits, batch_labels, mask);
            for (auto& p : trainable) p->zero_grad();
            tape.backward(loss);
            opt.step(trainable);
            loss_curve_.emplace_back(global_step_++, loss->item());
        }
    }

    expert.set_trainable(false);
    experts_.push_back(std::move(expert));
    class_map_.push_back(task.class_set);

    // S-X++: once the first adaptation exists, all embeddings use it,
    // including this task's own prototypes
    if (st_.plus_plus && t == 0) extractor_expert_ = 0;

    std::vector<std::vector<double>> feats;
    feats.reserve(task.train.size());
    for (const auto& s : task.train) feats.push_back(extract_feature(s));
    const int k = std::min<int>(clusters_for(task), static_cast<int>(feats.size()));
    auto km = kmeans(feats, k, rng_, rng_stream::kKmeans + static_cast<uint64_t>(t) * 0x100, 100,
                     st_.kmeans_restarts);
    prototypes_.push_back(PrototypeGroup{t, std::move(km.centroids)});
}

int SxStrategy::select_expert(const Sample& sample) const {
    if (experts_.empty()) throw ContractError("select_expert on an empty registry");
    const auto query = extract_feature(sample);
    int best_expert = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& group : prototypes_) {
        for (const auto& c : group.centroids) {
            const double d = squared_distance(query, c);
            if (d < best_d) {  // strict keeps earliest dataset, then lowest index
                best_d = d;
                best_expert = group.dataset_id;
            }
        }
    }
    return best_expert;
}

int SxStrategy::predict_with_expert(const Sample& sample, int expert) const {
    if (expert < 0 || expert >= tasks_trained()) throw ContractError("expert index out of range");
    auto patches = image_to_patches(base_->cfg, sample.pixels);
    auto feat = expert_feature(nullptr, patches, expert);
    const auto& set = experts_[static_cast<size_t>(expert)];
    if (st_.shared_head) {
        auto logits = classify(nullptr, feat, shared_w_, shared_b_);
        // all classes seen so far stay in play; masking is a training device
        return train_util::masked_argmax(logits->ptr(), st_.total_classes, seen_classes_);
    }
    auto logits = classify(nullptr, feat, set.head->w, set.head->b);
    int local = 0;
    for (int j = 1; j < logits->dim(0); ++j) {
        if (logits->data()[static_cast<size_t>(j)] > logits->data()[static_cast<size_t>(local)]) {
            local = j;
        }
    }
    return set.head->classes[static_cast<size_t>(local)];
}

SxStrategy::Prediction SxStrategy::predict_detailed(const Sample& sample) const {
    Prediction p;
    p.expert = select_expert(sample);
    p.label = predict_with_expert(sample, p.expert);
    return p;
}

double SxStrategy::expert_selection_accuracy(const std::vector<Sample>& labeled) const {
    if (labeled.empty()) throw ContractError("selection accuracy over an empty stream");
    int64_t hits = 0;
    for (const auto& s : labeled) hits += select_expert(s) == s.dataset_id ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(labeled.size());
}

}  // namespace peftcl
