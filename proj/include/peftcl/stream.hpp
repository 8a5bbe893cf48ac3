#pragma once

#include <optional>
#include <string>
#include <vector>

#include "peftcl/rng.hpp"

namespace peftcl {

enum class Scenario { cil, dil };

struct Sample {
    std::vector<float> pixels;  // H*W*C row-major
    int label = 0;              // global class id
    int dataset_id = 0;         // task that owns the sample
};

struct TaskData {
    std::vector<Sample> train;
    std::vector<Sample> test;
    std::vector<int> class_set;  // global ids present in this task
    int domain_id = 0;
    int height = 0, width = 0, channels = 0;
};

// Synthetic desk-scale benchmark. Classes are oriented gratings whose color
// is drawn per sample, so class identity lives in orientation only. The
// pretext split labels color bins instead: a backbone pretrained on it picks
// up color-dominant features and under-separates the task classes, which is
// the regime the strategy comparisons need.
struct StreamSpec {
    Scenario scenario = Scenario::cil;
    int num_tasks = 5;
    int num_classes = 10;  // CIL: total over all tasks; DIL: the fixed label set
    int image_h = 16;
    int image_w = 16;
    int channels = 3;
    int train_per_class = 16;  // per task
    int test_per_class = 8;
    double noise = 0.10;          // pixel noise sd
    double orient_jitter = 0.04;  // per-sample orientation jitter, radians
    double frequency = 2.0;       // grating cycles across the image
    bool with_pretext = true;
    int pretext_classes = 4;  // color-bin labels
    int pretext_train_per_class = 32;
    int pretext_test_per_class = 8;

    void validate() const;
    int classes_per_task() const;  // CIL split width
};

struct MaterializedStream {
    StreamSpec spec;
    std::optional<TaskData> pretext;
    std::vector<TaskData> tasks;
};

MaterializedStream make_stream(const StreamSpec& spec, uint64_t seed);

// dataset file format: <base>.manifest (text) + <base>.f32 (raw LE floats)
void save_task_data(const TaskData& task, const std::string& base_path);
TaskData load_task_data(const std::string& base_path);

}  // namespace peftcl
