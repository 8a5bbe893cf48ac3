#pragma once

#include <vector>

#include "peftcl/training.hpp"

namespace peftcl {

struct SelectionResult {
    std::vector<int> indices;     // descending score, ties -> lower index
    std::vector<double> scores;   // scores of the selected, same order
};

// cosine similarity of the query against every key
std::vector<double> score_keys(const std::vector<double>& query,
                               const std::vector<TensorPtr>& keys);
SelectionResult select_topn(const std::vector<double>& scores, int n);

// L2X family: a shared pool of PEFT modules with key-based retrieval, one
// shared classifier, and the key-pull surrogate joined to the task loss.
class L2xStrategy {
  public:
    struct Settings {
        AdapterKind kind = AdapterKind::lora;  // prompt -> L2P, lora -> L2L
        Scenario scenario = Scenario::cil;
        int pool_size = 10;     // modules in the pool
        int select_count = 5;   // active modules per input
        double lambda = 0.1;
        bool raw_gamma_surrogate = false;  // literal objective adds +cos instead of (1-cos)
        int prompt_len = 10;
        int rank = 1;
        int total_classes = 0;
        TrainSettings train;
    };

    L2xStrategy(const FrozenBackbone* base, Settings settings, uint64_t seed);

    void train_task(const TaskData& task);

    // f(x) on the unadapted frozen model; selection queries never carry grads
    std::vector<double> query_feature(const Sample& sample) const;
    SelectionResult select(const std::vector<double>& query) const;
    int predict(const Sample& sample) const;

    int tasks_trained() const { return tasks_seen_; }
    const std::vector<AdapterSet>& modules() const { return modules_; }
    const std::vector<TensorPtr>& keys() const { return keys_; }
    const TensorPtr& head_w() const { return head_w_; }
    const TensorPtr& head_b() const { return head_b_; }
    const Settings& settings() const { return st_; }
    const std::vector<std::pair<int, double>>& loss_curve() const { return loss_curve_; }

  private:
    TensorPtr adapted_feature(Tape* tape, const TensorPtr& patch_matrix,
                              const SelectionResult& sel) const;

    const FrozenBackbone* base_;
    Settings st_;
    Rng rng_;
    std::vector<AdapterSet> modules_;  // pool, no heads
    std::vector<TensorPtr> keys_;      // [D], trainable
    TensorPtr head_w_, head_b_;
    std::vector<uint8_t> seen_classes_;
    int tasks_seen_ = 0;
    std::vector<std::pair<int, double>> loss_curve_;
    int global_step_ = 0;
};

}  // namespace peftcl
