#pragma once

#include <vector>

#include "peftcl/optimizer.hpp"
#include "peftcl/stream.hpp"
#include "peftcl/vit.hpp"

namespace peftcl {

// frozen feature extractor shared by every strategy in a run
struct FrozenBackbone {
    ViTConfig cfg;
    ViTParams params;
};

struct TrainSettings {
    OptimizerConfig opt;
    int epochs = 50;
    int batch_size = 128;
};

namespace train_util {

// constant patch matrices, computed once per task
std::vector<TensorPtr> patchify_all(const ViTConfig& cfg, const std::vector<Sample>& samples);

// stacks per-sample [D] features into [B x D]
TensorPtr stack_features(Tape* tape, const std::vector<TensorPtr>& feats);

// shuffle stream convention shared by all training loops: one stream per
// (task, epoch) so draw order is independent of batch internals
uint64_t shuffle_stream(int task_index, int epoch);

std::vector<int> epoch_order(int n, const Rng& rng, int task_index, int epoch);

// argmax over allowed columns (mask true); ties -> lowest index
int masked_argmax(const double* logits, int n, const std::vector<uint8_t>& allowed);

}  // namespace train_util
}  // namespace peftcl
