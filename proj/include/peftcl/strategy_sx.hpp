#pragma once

#include <memory>
#include <vector>

#include "peftcl/kmeans.hpp"
#include "peftcl/metrics.hpp"
#include "peftcl/training.hpp"

namespace peftcl {

struct PrototypeGroup {
    int dataset_id = 0;
    std::vector<std::vector<double>> centroids;
};

// S-X family: one PEFT expert per dataset, experts selected at inference by
// the globally nearest k-means prototype in the extractor's feature space.
class SxStrategy {
  public:
    struct Settings {
        AdapterKind kind = AdapterKind::lora;
        Scenario scenario = Scenario::cil;
        int prompt_len = 10;
        int rank = 1;
        bool plus_plus = false;   // extractor switches to the first-task-adapted model
        bool shared_head = false; // one head over all classes, absent-class masking in training
        int clusters = 0;         // 0: DIL -> 5, CIL -> 2 * new classes
        int kmeans_restarts = 8;
        int total_classes = 0;    // label universe size (shared head width)
        TrainSettings train;
    };

    SxStrategy(const FrozenBackbone* base, Settings settings, uint64_t seed);

    // trains expert t on the next dataset, then stores its k prototypes
    void train_task(const TaskData& task);

    std::vector<double> extract_feature(const Sample& sample) const;
    int select_expert(const Sample& sample) const;

    struct Prediction {
        int label = -1;
        int expert = -1;
    };
    Prediction predict_detailed(const Sample& sample) const;
    int predict(const Sample& sample) const { return predict_detailed(sample).label; }

    double expert_selection_accuracy(const std::vector<Sample>& labeled) const;

    int tasks_trained() const { return static_cast<int>(experts_.size()); }
    const std::vector<AdapterSet>& experts() const { return experts_; }
    const std::vector<PrototypeGroup>& prototypes() const { return prototypes_; }
    const std::vector<std::vector<int>>& class_map() const { return class_map_; }
    const Settings& settings() const { return st_; }
    const TensorPtr& shared_head_w() const { return shared_w_; }
    const TensorPtr& shared_head_b() const { return shared_b_; }
    const std::vector<std::pair<int, double>>& loss_curve() const { return loss_curve_; }

    // forces routing through a given expert (forced-correct routing runs)
    int predict_with_expert(const Sample& sample, int expert) const;

  private:
    int clusters_for(const TaskData& task) const;
    TensorPtr expert_feature(Tape* tape, const TensorPtr& patch_matrix, int expert) const;

    const FrozenBackbone* base_;
    Settings st_;
    Rng rng_;
    std::vector<AdapterSet> experts_;
    std::vector<PrototypeGroup> prototypes_;
    std::vector<std::vector<int>> class_map_;
    std::vector<uint8_t> seen_classes_;  // shared-head inference support
    TensorPtr shared_w_, shared_b_;
    int extractor_expert_ = -1;  // ++: expert 0 once trained
    std::vector<std::pair<int, double>> loss_curve_;  // (global step, loss)
    int global_step_ = 0;
};

}  // namespace peftcl
