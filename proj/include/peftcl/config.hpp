#pragma once

#include <string>
#include <vector>

#include "peftcl/stream.hpp"
#include "peftcl/training.hpp"

namespace peftcl {

// One experiment = one config file + a seed list. Line-oriented
// `section.key = value` text; unknown keys are rejected by name.
struct ExperimentConfig {
    ViTConfig model;

    std::string method = "s_lora";  // finetune|s_prompts|s_lora|l2p|l2l|joint_prompt|joint_lora|joint_full
    bool plus_plus = false;
    bool shared_head = false;

    int prompt_len = 10;
    int rank = 1;
    double lora_alpha = -1.0;  // <0: defaults to rank (scale 1)
    bool target_q = true;
    bool target_v = true;

    int clusters = 0;  // 0: scenario rule (DIL 5, CIL 2x new classes)
    int kmeans_restarts = 8;

    int pool_size = 10;
    int select_count = 5;
    double lambda = 0.1;
    std::string surrogate = "one_minus_cos";  // or raw_gamma

    StreamSpec stream;

    TrainSettings optim;     // the method's own block; defaults depend on family
    TrainSettings pretrain;  // backbone pretraining on the pretext split

    std::vector<uint64_t> seeds{1};
    std::string out_dir;  // empty: PEFTCL_OUT or ./out
    std::string kernel = "auto";
    int jobs = 1;

    std::vector<int> sweep_rank;
    std::vector<int> sweep_prompt_len;
    std::vector<int> sweep_clusters;
    std::vector<int> sweep_pool_size;

    bool is_sx_family() const { return method == "s_prompts" || method == "s_lora"; }
    bool is_l2x_family() const { return method == "l2p" || method == "l2l"; }
    bool is_joint() const { return method.rfind("joint_", 0) == 0; }
    bool uses_lora() const {
        return method == "s_lora" || method == "l2l" || method == "joint_lora";
    }
    void validate() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);
// stable hash of the canonical serialization plus the seed
std::string config_hash(const ExperimentConfig& cfg, uint64_t seed);

}  // namespace peftcl
