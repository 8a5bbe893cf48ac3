#include "peftcl/training.hpp"

#include <numeric>

namespace peftcl::train_util {

std::vector<TensorPtr> patchify_all(const ViTConfig& cfg, const std::vector<Sample>& samples) {
    std::vector<TensorPtr> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(image_to_patches(cfg, s.pixels));
    return out;
}

TensorPtr stack_features(Tape* tape, const std::vector<TensorPtr>& feats) {
    std::vector<TensorPtr> rows;
    rows.reserve(feats.size());
    for (const auto& f : feats) {
        rows.push_back(ops::reshape(tape, f, {1, static_cast<int>(f->size())}));
    }
    return ops::concat_rows(tape, rows);
}

uint64_t shuffle_stream(int task_index, int epoch) {
    return rng_stream::kShuffle + static_cast<uint64_t>(task_index) * 0x1000 +
           static_cast<uint64_t>(epoch);
}

std::vector<int> epoch_order(int n, const Rng& rng, int task_index, int epoch) {
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    auto s = rng.stream(shuffle_stream(task_index, epoch));
    s.shuffle(order);
    return order;
}

int masked_argmax(const double* logits, int n, const std::vector<uint8_t>& allowed) {
    int best = -1;
    for (int j = 0; j < n; ++j) {
        if (!allowed[static_cast<size_t>(j)]) continue;
        if (best < 0 || logits[j] > logits[best]) best = j;
    }
    if (best < 0) throw ContractError("argmax over an empty class set");
    return best;
}

}  // namespace peftcl::train_util
