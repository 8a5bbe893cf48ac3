#pragma once

#include <optional>
#include <vector>

#include "peftcl/autodiff.hpp"
#include "peftcl/rng.hpp"
#include "peftcl/tensor.hpp"

namespace peftcl {

enum class AdapterKind { prompt, lora };

// soft prompt: trainable tokens prepended in embedding space
struct PromptParams {
    TensorPtr tokens;  // [len x dim]
    int len = 0;
    int dim = 0;
};

// one low-rank pair; the increment b*a is never materialized in forward
struct LoraPair {
    TensorPtr a;  // [rank x d_out]
    TensorPtr b;  // [d_in x rank]
};

struct LoraParams {
    int rank = 0;
    double alpha = 0.0;  // forward scale alpha/rank; defaults to rank (scale 1)
    std::vector<LoraPair> q;  // per layer; empty when Q not targeted
    std::vector<LoraPair> v;
    double scaling() const { return alpha / rank; }
    std::vector<TensorPtr> tensors() const;
};

struct ClassifierHead {
    TensorPtr w;  // [dim x classes]
    TensorPtr b;  // [classes]
    std::vector<int> classes;  // global class ids, column order
};

// one expert's trainable state
struct AdapterSet {
    AdapterKind kind = AdapterKind::prompt;
    std::optional<PromptParams> prompt;
    std::optional<LoraParams> lora;
    std::optional<ClassifierHead> head;
    std::vector<TensorPtr> tensors() const;  // adapter + head
    void set_trainable(bool v);
};

PromptParams init_prompt(int len, int dim, const Rng& rng, uint64_t stream);
// A ~ N(0, 0.02^2), B = 0: the initial increment is exactly zero
LoraParams init_lora(int rank, bool target_q, bool target_v, int dim, int layers, const Rng& rng,
                     uint64_t stream);
int64_t lora_param_count(const LoraParams& p);

// [prompts...; x], descending-score order is the caller's responsibility
TensorPtr prepend_prompt(Tape* tape, const std::vector<const PromptParams*>& prompts,
                         const TensorPtr& x);
TensorPtr prepend_prompt(Tape* tape, const PromptParams& prompt, const TensorPtr& x);

// z*w + (z*b)*a, two rank-r products
TensorPtr lora_linear_forward(Tape* tape, const TensorPtr& w, const TensorPtr& a,
                              const TensorPtr& b, const TensorPtr& z);

// w + b*a, materialized once for the zero-overhead serving regime
TensorPtr merge_lora(const TensorPtr& w, const TensorPtr& a, const TensorPtr& b);

// Every adapter's increment is computed for every sample and masked by the
// per-sample weight, which keeps the batch vectorized even when assignments
// are mixed. weights is [batch x adapters]; an id assignment is a 0/1 row.
struct MultiLoraAssignment {
    std::vector<std::vector<double>> weights;
    static MultiLoraAssignment from_ids(const std::vector<int>& ids, int num_adapters);
};
TensorPtr multi_lora_masked_forward(const TensorPtr& z, const TensorPtr& w,
                                    const std::vector<const LoraPair*>& adapters, double scaling,
                                    const MultiLoraAssignment& assignment);

}  // namespace peftcl
